#pragma once

#include "tlsfd/nn.hpp"

namespace tlsfd {

/// Losses in nats. total = (text_loss + spectrum_loss) / 2.
struct LossBreakdown {
    double text_loss = 0.0;
    double spectrum_loss = 0.0;
    double total = 0.0;
};

/// logits[i][j] = text[i] . spectrum[j] / temperature.
nn::Matrix batch_similarities(const nn::Matrix& text, const nn::Matrix& spectrum, double temperature);

/// Row-wise softmax of (text text^T + spectrum spectrum^T) / (2 temperature).
nn::Matrix soft_targets(const nn::Matrix& text, const nn::Matrix& spectrum, double temperature);

/// Symmetric cross-entropy between the similarity logits and the soft
/// targets: text rows against target rows, spectrum rows (logit columns)
/// against target columns.
LossBreakdown contrastive_loss(const nn::Matrix& text, const nn::Matrix& spectrum, double temperature);

struct LossGradients {
    nn::Matrix d_text;
    nn::Matrix d_spectrum;
};

/// Gradient of `total` with the soft targets held constant.
LossGradients loss_backward(const nn::Matrix& text, const nn::Matrix& spectrum, double temperature);

/// Loss and gradient in one pass. A non-null `fixed_targets` (B x B)
/// replaces the soft targets computed from the batch.
LossBreakdown contrastive_loss_and_gradients(const nn::Matrix& text, const nn::Matrix& spectrum, double temperature,
                                             LossGradients* grads, const nn::Matrix* fixed_targets = nullptr);

/// Scales every row to unit length; `norms` receives the original lengths.
nn::Matrix l2_normalize_rows(const nn::Matrix& m, nn::Vec* norms = nullptr);

/// Pulls a gradient w.r.t. normalized rows back through l2_normalize_rows.
nn::Matrix l2_normalize_rows_backward(const nn::Matrix& normalized, const nn::Vec& norms, const nn::Matrix& upstream);

}  // namespace tlsfd
