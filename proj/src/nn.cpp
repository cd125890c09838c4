#include "tlsfd/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "tlsfd/errors.hpp"

namespace tlsfd::nn {

double dot(std::span<const double> a, std::span<const double> b) {
    // Four partial sums so the loop is not bound by add latency.
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    const std::size_t n = a.size();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
    const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
    return cdf + x * pdf;
}

namespace {

struct Moments {
    double mean;
    double inv_std;
};

Moments moments(std::span<const double> x, double eps) {
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n;
    return {mean, 1.0 / std::sqrt(var + eps)};
}

}  // namespace

Vec layer_norm(std::span<const double> x, std::span<const double> gain, std::span<const double> bias, double eps) {
    if (x.size() != gain.size() || x.size() != bias.size() || x.empty()) {
        throw ShapeError("layer_norm: input, gain and bias lengths differ");
    }
    const Moments m = moments(x, eps);
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = gain[i] * (x[i] - m.mean) * m.inv_std + bias[i];
    return y;
}

// ---------------------------------------------------------------------------

ProjectionHead ProjectionHead::init(std::size_t in_dim, std::size_t out_dim, double dropout_rate, std::uint64_t seed) {
    if (in_dim == 0 || out_dim == 0) throw ShapeError("projection head dimensions must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ParameterError("dropout_rate must lie in [0,1)");
    ProjectionHead h;
    h.in_dim = in_dim;
    h.out_dim = out_dim;
    h.dropout_rate = dropout_rate;
    Rng rng = make_rng(seed, {0x1417u});
    const auto fill = [&rng](Matrix& m, std::size_t fan_in, std::size_t fan_out) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (double& w : m.data) w = dist(rng);
    };
    h.w1 = Matrix(out_dim, in_dim);
    fill(h.w1, in_dim, out_dim);
    h.w2 = Matrix(out_dim, out_dim);
    fill(h.w2, out_dim, out_dim);
    h.b1.assign(out_dim, 0.0);
    h.b2.assign(out_dim, 0.0);
    h.ln_gain.assign(out_dim, 1.0);
    h.ln_bias.assign(out_dim, 0.0);
    return h;
}

std::size_t ProjectionHead::parameter_count() const {
    return w1.data.size() + b1.size() + w2.data.size() + b2.size() + ln_gain.size() + ln_bias.size();
}

void ProjectionHead::validate() const {
    if (w1.rows != out_dim || w1.cols != in_dim || w1.data.size() != out_dim * in_dim || w2.rows != out_dim ||
        w2.cols != out_dim || w2.data.size() != out_dim * out_dim || b1.size() != out_dim ||
        b2.size() != out_dim || ln_gain.size() != out_dim || ln_bias.size() != out_dim) {
        throw ShapeError("projection head parameter shapes are inconsistent");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ParameterError("dropout_rate must lie in [0,1)");
    const auto finite = [](std::span<const double> v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    if (!finite(w1.data) || !finite(b1) || !finite(w2.data) || !finite(b2) || !finite(ln_gain) || !finite(ln_bias)) {
        throw NumericError("projection head holds non-finite parameters");
    }
}

std::vector<ParamBlock> parameter_blocks(ProjectionHead& head, const std::string& prefix) {
    return {{prefix + "w1", head.w1.data}, {prefix + "b1", head.b1},           {prefix + "w2", head.w2.data},
            {prefix + "b2", head.b2},      {prefix + "ln_gain", head.ln_gain}, {prefix + "ln_bias", head.ln_bias}};
}

ForwardCache head_forward(const ProjectionHead& head, std::span<const double> x, Mode mode, Rng* rng) {
    if (x.size() != head.in_dim) {
        throw ShapeError("head_forward: input has " + std::to_string(x.size()) + " values, expected " +
                         std::to_string(head.in_dim));
    }
    if (mode == Mode::Train && rng == nullptr) throw ContractError("head_forward: train mode needs an rng");
    const std::size_t n = head.out_dim;
    ForwardCache c;
    c.in_dim = head.in_dim;
    c.out_dim = n;
    c.head_version = head.version;
    c.head = &head;
    c.input.assign(x.begin(), x.end());

    c.pre_gelu.resize(n);
    c.post_gelu.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        c.pre_gelu[i] = dot(head.w1.row(i), x) + head.b1[i];
        c.post_gelu[i] = gelu(c.pre_gelu[i]);
    }
    c.pre_dropout.resize(n);
    for (std::size_t i = 0; i < n; ++i) c.pre_dropout[i] = dot(head.w2.row(i), c.post_gelu) + head.b2[i];

    c.keep_scale.assign(n, 1.0);
    if (mode == Mode::Train && head.dropout_rate > 0.0) {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const double scale = 1.0 / (1.0 - head.dropout_rate);
        for (double& k : c.keep_scale) k = unit(*rng) < head.dropout_rate ? 0.0 : scale;
    }
    c.pre_norm.resize(n);
    for (std::size_t i = 0; i < n; ++i) c.pre_norm[i] = c.pre_gelu[i] + c.keep_scale[i] * c.pre_dropout[i];

    const Moments m = moments(c.pre_norm, kLayerNormEps);
    c.mean = m.mean;
    c.inv_std = m.inv_std;
    c.normalized.resize(n);
    c.output.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        c.normalized[i] = (c.pre_norm[i] - m.mean) * m.inv_std;
        c.output[i] = head.ln_gain[i] * c.normalized[i] + head.ln_bias[i];
    }
    return c;
}

HeadGradients HeadGradients::zeros_like(const ProjectionHead& head) {
    HeadGradients g;
    g.w1 = Matrix(head.w1.rows, head.w1.cols);
    g.b1.assign(head.b1.size(), 0.0);
    g.w2 = Matrix(head.w2.rows, head.w2.cols);
    g.b2.assign(head.b2.size(), 0.0);
    g.ln_gain.assign(head.ln_gain.size(), 0.0);
    g.ln_bias.assign(head.ln_bias.size(), 0.0);
    return g;
}

std::vector<ParamBlock> HeadGradients::blocks(const std::string& prefix) {
    return {{prefix + "w1", w1.data}, {prefix + "b1", b1},           {prefix + "w2", w2.data},
            {prefix + "b2", b2},      {prefix + "ln_gain", ln_gain}, {prefix + "ln_bias", ln_bias}};
}

Vec head_backward(const ProjectionHead& head, const ForwardCache& cache, std::span<const double> upstream,
                  HeadGradients& grads, bool want_input_grad) {
    const std::size_t n = head.out_dim;
    if (cache.head != &head || cache.head_version != head.version || cache.in_dim != head.in_dim ||
        cache.out_dim != n || cache.output.size() != n) {
        throw ContractError("head_backward: cache does not belong to this head's current parameters");
    }
    if (upstream.size() != n) throw ShapeError("head_backward: upstream gradient has the wrong length");
    if (grads.w1.data.size() != head.w1.data.size() || grads.b1.size() != n) {
        throw ShapeError("head_backward: gradient buffers do not match the head");
    }

    // Layer norm.
    Vec d_norm(n);
    double mean_d = 0.0;
    double mean_dx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        grads.ln_gain[i] += upstream[i] * cache.normalized[i];
        grads.ln_bias[i] += upstream[i];
        d_norm[i] = upstream[i] * head.ln_gain[i];
        mean_d += d_norm[i];
        mean_dx += d_norm[i] * cache.normalized[i];
    }
    mean_d /= static_cast<double>(n);
    mean_dx /= static_cast<double>(n);
    Vec d_pre_norm(n);
    for (std::size_t i = 0; i < n; ++i) {
        d_pre_norm[i] = cache.inv_std * (d_norm[i] - mean_d - cache.normalized[i] * mean_dx);
    }

    // Dropout branch and second dense layer.
    Vec d_q(n);
    for (std::size_t i = 0; i < n; ++i) d_q[i] = d_pre_norm[i] * cache.keep_scale[i];
    Vec d_h(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (d_q[i] == 0.0) continue;
        grads.b2[i] += d_q[i];
        auto gw = grads.w2.row(i);
        const auto w = head.w2.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            gw[j] += d_q[i] * cache.post_gelu[j];
            d_h[j] += d_q[i] * w[j];
        }
    }

    // Skip path plus GELU path into the first dense layer.
    Vec d_p(n);
    for (std::size_t i = 0; i < n; ++i) d_p[i] = d_pre_norm[i] + d_h[i] * gelu_derivative(cache.pre_gelu[i]);

    Vec d_x(want_input_grad ? head.in_dim : 0, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double g = d_p[i];
        if (g == 0.0) continue;
        grads.b1[i] += g;
        auto gw = grads.w1.row(i);
        for (std::size_t j = 0; j < head.in_dim; ++j) gw[j] += g * cache.input[j];
        if (want_input_grad) {
            const auto w = head.w1.row(i);
            for (std::size_t j = 0; j < head.in_dim; ++j) d_x[j] += g * w[j];
        }
    }
    return d_x;
}

// ---------------------------------------------------------------------------

void Adam::step(const std::vector<ParamBlock>& params, const std::vector<ParamBlock>& grads) {
    if (params.size() != grads.size()) throw ShapeError("Adam: parameter and gradient block counts differ");
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(p.values.size(), 0.0);
            v_.emplace_back(p.values.size(), 0.0);
        }
    }
    if (m_.size() != params.size()) throw ShapeError("Adam: block count changed between steps");
    for (std::size_t b = 0; b < params.size(); ++b) {
        if (params[b].values.size() != m_[b].size() || grads[b].values.size() != m_[b].size()) {
            throw ShapeError("Adam: block '" + params[b].name + "' changed shape");
        }
        for (double g : grads[b].values) {
            if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter block '" + grads[b].name + "'");
        }
    }

    ++step_;
    const double t = static_cast<double>(step_);
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    for (std::size_t b = 0; b < params.size(); ++b) {
        auto p = params[b].values;
        const auto g = grads[b].values;
        auto& m = m_[b];
        auto& v = v_[b];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            p[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
        }
    }
}

// ---------------------------------------------------------------------------

double grad_check(const LossWithGradient& loss, std::span<const double> params, double h, std::uint64_t seed) {
    const std::size_t n = params.size();
    if (n == 0) return 0.0;
    Vec analytic(n, 0.0);
    Vec x(params.begin(), params.end());
    loss(x, analytic);

    const std::size_t sample = std::min(n, std::max<std::size_t>(100, (n + 99) / 100));
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    Rng rng = make_rng(seed, {0x9c4ecu});
    // Partial Fisher-Yates: the first `sample` entries are a uniform draw.
    for (std::size_t i = 0; i < sample; ++i) {
        const auto j = std::uniform_int_distribution<std::size_t>(i, n - 1)(rng);
        std::swap(coords[i], coords[j]);
    }

    double worst = 0.0;
    for (std::size_t s = 0; s < sample; ++s) {
        const std::size_t i = coords[s];
        const double orig = x[i];
        x[i] = orig + h;
        const double up = loss(x, {});
        x[i] = orig - h;
        const double down = loss(x, {});
        x[i] = orig;
        const double fd = (up - down) / (2.0 * h);
        const double err = std::abs(analytic[i] - fd) / std::max(1e-8, std::abs(analytic[i]) + std::abs(fd));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace tlsfd::nn
