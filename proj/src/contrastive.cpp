#include "tlsfd/contrastive.hpp"

#include <algorithm>
#include <cmath>

#include "tlsfd/errors.hpp"

namespace tlsfd {

using nn::Matrix;

namespace {

void check_inputs(const Matrix& text, const Matrix& spectrum, double temperature) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ParameterError("temperature must be positive");
    if (text.rows == 0) throw ShapeError("contrastive batch is empty");
    if (text.rows != spectrum.rows || text.cols != spectrum.cols) {
        throw ShapeError("text and spectrum batches have different shapes");
    }
    for (const Matrix* m : {&text, &spectrum}) {
        for (std::size_t r = 0; r < m->rows; ++r) {
            for (double v : m->row(r)) {
                if (!std::isfinite(v)) {
                    throw NumericError(std::string(m == &text ? "text" : "spectrum") + " projection row " +
                                       std::to_string(r) + " is not finite");
                }
            }
        }
    }
}

Matrix gram(const Matrix& a, const Matrix& b, double scale) {
    Matrix out(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < b.rows; ++j) out(i, j) = nn::dot(a.row(i), b.row(j)) * scale;
    }
    return out;
}

double log_sum_exp(std::span<const double> v) {
    const double m = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
    }
    return t;
}

Matrix row_softmax(const Matrix& m) {
    Matrix out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double lse = log_sum_exp(m.row(i));
        for (std::size_t j = 0; j < m.cols; ++j) out(i, j) = std::exp(m(i, j) - lse);
    }
    return out;
}

// Mean over rows of CE(targets[i], softmax(logits[i])), and optionally
// d(loss)/d(logits) accumulated with weight `scale`.
double cross_entropy_rows(const Matrix& logits, const Matrix& targets, Matrix* d_logits, double scale) {
    const double inv_b = 1.0 / static_cast<double>(logits.rows);
    double loss = 0.0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const auto row = logits.row(i);
        const double lse = log_sum_exp(row);
        double target_mass = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) {
            loss -= targets(i, j) * (row[j] - lse);
            target_mass += targets(i, j);
        }
        if (d_logits != nullptr) {
            // Target rows need not sum to one (columns of a row-stochastic matrix).
            for (std::size_t j = 0; j < logits.cols; ++j) {
                (*d_logits)(i, j) += scale * inv_b * (std::exp(row[j] - lse) * target_mass - targets(i, j));
            }
        }
    }
    return loss * inv_b;
}

}  // namespace

Matrix batch_similarities(const Matrix& text, const Matrix& spectrum, double temperature) {
    check_inputs(text, spectrum, temperature);
    return gram(text, spectrum, 1.0 / temperature);
}

Matrix soft_targets(const Matrix& text, const Matrix& spectrum, double temperature) {
    check_inputs(text, spectrum, temperature);
    const Matrix tt = gram(text, text, 1.0);
    const Matrix ss = gram(spectrum, spectrum, 1.0);
    Matrix s(tt.rows, tt.cols);
    for (std::size_t k = 0; k < s.data.size(); ++k) s.data[k] = (tt.data[k] + ss.data[k]) / (2.0 * temperature);
    return row_softmax(s);
}

LossBreakdown contrastive_loss_and_gradients(const Matrix& text, const Matrix& spectrum, double temperature,
                                             LossGradients* grads, const Matrix* fixed_targets) {
    const Matrix logits = batch_similarities(text, spectrum, temperature);
    if (fixed_targets != nullptr && (fixed_targets->rows != text.rows || fixed_targets->cols != text.rows)) {
        throw ShapeError("fixed targets must be B x B");
    }
    const Matrix targets = fixed_targets != nullptr ? *fixed_targets : soft_targets(text, spectrum, temperature);
    const Matrix logits_t = transpose(logits);
    const Matrix targets_t = transpose(targets);

    const std::size_t b = text.rows;
    Matrix d_logits_t_rows(b, b);  // gradient w.r.t. logits, text side
    Matrix d_logits_s_rows(b, b);  // gradient w.r.t. logits^T, spectrum side
    const bool want = grads != nullptr;

    LossBreakdown loss;
    loss.text_loss = cross_entropy_rows(logits, targets, want ? &d_logits_t_rows : nullptr, 0.5);
    loss.spectrum_loss = cross_entropy_rows(logits_t, targets_t, want ? &d_logits_s_rows : nullptr, 0.5);
    loss.total = 0.5 * (loss.text_loss + loss.spectrum_loss);

    if (want) {
        Matrix g(b, b);
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < b; ++j) g(i, j) = d_logits_t_rows(i, j) + d_logits_s_rows(j, i);
        }
        const std::size_t d = text.cols;
        grads->d_text = Matrix(b, d);
        grads->d_spectrum = Matrix(b, d);
        const double inv_tau = 1.0 / temperature;
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < b; ++j) {
                const double gij = g(i, j) * inv_tau;
                if (gij == 0.0) continue;
                auto dt = grads->d_text.row(i);
                auto ds = grads->d_spectrum.row(j);
                const auto zs = spectrum.row(j);
                const auto zt = text.row(i);
                for (std::size_t k = 0; k < d; ++k) {
                    dt[k] += gij * zs[k];
                    ds[k] += gij * zt[k];
                }
            }
        }
    }
    return loss;
}

LossBreakdown contrastive_loss(const Matrix& text, const Matrix& spectrum, double temperature) {
    return contrastive_loss_and_gradients(text, spectrum, temperature, nullptr);
}

LossGradients loss_backward(const Matrix& text, const Matrix& spectrum, double temperature) {
    LossGradients g;
    contrastive_loss_and_gradients(text, spectrum, temperature, &g);
    return g;
}

Matrix l2_normalize_rows(const Matrix& m, nn::Vec* norms) {
    Matrix out = m;
    if (norms) norms->assign(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double n = nn::l2_norm(m.row(i));
        if (!(n > 0.0)) throw NumericError("cannot normalize zero-length row " + std::to_string(i));
        for (double& v : out.row(i)) v /= n;
        if (norms) (*norms)[i] = n;
    }
    return out;
}

Matrix l2_normalize_rows_backward(const Matrix& normalized, const nn::Vec& norms, const Matrix& upstream) {
    Matrix out(normalized.rows, normalized.cols);
    for (std::size_t i = 0; i < normalized.rows; ++i) {
        const auto u = normalized.row(i);
        const auto g = upstream.row(i);
        const double proj = nn::dot(u, g);
        auto o = out.row(i);
        for (std::size_t k = 0; k < u.size(); ++k) o[k] = (g[k] - u[k] * proj) / norms[i];
    }
    return out;
}

}  // namespace tlsfd
