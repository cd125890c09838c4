#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tlsfd/seed.hpp"

namespace tlsfd::nn {

using Vec = std::vector<double>;

/// Dense row-major matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool operator==(const Matrix&) const = default;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

/// Exact-erf GELU: 0.5 x (1 + erf(x / sqrt 2)).
double gelu(double x);
/// d/dx gelu = Phi(x) + x phi(x).
double gelu_derivative(double x);

inline constexpr double kLayerNormEps = 1e-5;

/// gain * (x - mean) / sqrt(var + eps) + bias, population variance.
Vec layer_norm(std::span<const double> x, std::span<const double> gain, std::span<const double> bias,
               double eps = kLayerNormEps);

inline constexpr std::size_t kProjectionDim = 64;
inline constexpr double kDefaultDropout = 0.1;

/// dense(in -> 64) -> GELU -> dense(64 -> 64) -> dropout -> + skip -> layer norm.
/// The skip connection carries the first dense layer's output.
struct ProjectionHead {
    std::size_t in_dim = 0;
    std::size_t out_dim = kProjectionDim;
    Matrix w1;  // out_dim x in_dim
    Vec b1;
    Matrix w2;  // out_dim x out_dim
    Vec b2;
    Vec ln_gain;
    Vec ln_bias;
    double dropout_rate = kDefaultDropout;
    // Bumped whenever parameters change; forward caches record it.
    std::uint64_t version = 0;

    /// Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases, unit gain.
    static ProjectionHead init(std::size_t in_dim, std::size_t out_dim, double dropout_rate, std::uint64_t seed);

    std::size_t parameter_count() const;
    /// Throws ShapeError/NumericError if dimensions or values are inconsistent.
    void validate() const;

    /// Parameter equality; `version` is bookkeeping and not compared.
    bool operator==(const ProjectionHead& o) const {
        return in_dim == o.in_dim && out_dim == o.out_dim && w1 == o.w1 && b1 == o.b1 && w2 == o.w2 &&
               b2 == o.b2 && ln_gain == o.ln_gain && ln_bias == o.ln_bias && dropout_rate == o.dropout_rate;
    }
};

/// A named view of one parameter (or gradient) block.
struct ParamBlock {
    std::string name;
    std::span<double> values;
};

/// Blocks in fixed order: w1, b1, w2, b2, ln_gain, ln_bias. Names get `prefix`.
std::vector<ParamBlock> parameter_blocks(ProjectionHead& head, const std::string& prefix = "");

enum class Mode { Train, Infer };

struct ForwardCache {
    Vec input;
    Vec pre_gelu;    // p = W1 x + b1
    Vec post_gelu;   // h = gelu(p)
    Vec pre_dropout; // q = W2 h + b2
    Vec keep_scale;  // 0 or 1/(1-rate) per unit; all 1 in infer mode
    Vec pre_norm;    // r = p + dropout(q)
    Vec normalized;  // (r - mean) * inv_std
    double mean = 0.0;
    double inv_std = 0.0;
    Vec output;      // z
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::uint64_t head_version = 0;
    const ProjectionHead* head = nullptr;
};

/// Train mode draws the dropout mask from `rng`, which must then be non-null.
ForwardCache head_forward(const ProjectionHead& head, std::span<const double> x, Mode mode, Rng* rng = nullptr);

struct HeadGradients {
    Matrix w1;
    Vec b1;
    Matrix w2;
    Vec b2;
    Vec ln_gain;
    Vec ln_bias;

    static HeadGradients zeros_like(const ProjectionHead& head);
    std::vector<ParamBlock> blocks(const std::string& prefix = "");
};

/// Accumulates d(z . upstream)/d(params) into `grads` and returns d/dx
/// (empty when `want_input_grad` is false).
Vec head_backward(const ProjectionHead& head, const ForwardCache& cache, std::span<const double> upstream,
                  HeadGradients& grads, bool want_input_grad = true);

// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adaptive-moment optimizer with bias correction over a fixed list of
/// parameter blocks.
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    /// params[i] is updated with grads[i]. Shapes must stay the same across
    /// calls. A non-finite gradient throws NumericError naming the block and
    /// leaves every parameter untouched.
    void step(const std::vector<ParamBlock>& params, const std::vector<ParamBlock>& grads);

    std::uint64_t steps() const noexcept { return step_; }
    const AdamConfig& config() const noexcept { return config_; }

private:
    AdamConfig config_;
    std::vector<Vec> m_;
    std::vector<Vec> v_;
    std::uint64_t step_ = 0;
};

// ---------------------------------------------------------------------------

/// Loss at `params`; when `grad` is non-empty it also receives the analytic
/// gradient (same length as params).
using LossWithGradient = std::function<double(std::span<const double> params, std::span<double> grad)>;

/// Central-difference check on a seeded random subsample of coordinates
/// (1% of them, at least 100, at most all). Returns the largest
/// |g - g_fd| / max(1e-8, |g| + |g_fd|).
double grad_check(const LossWithGradient& loss, std::span<const double> params, double h, std::uint64_t seed = 0);

}  // namespace tlsfd::nn
