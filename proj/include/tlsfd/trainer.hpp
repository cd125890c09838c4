#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tlsfd/contrastive.hpp"
#include "tlsfd/corpus.hpp"
#include "tlsfd/inference.hpp"
#include "tlsfd/model.hpp"
#include "tlsfd/queries.hpp"
#include "tlsfd/text_embed.hpp"

namespace tlsfd {

struct EpochLoss {
    int epoch = 0;
    double train_loss = 0.0;  // nats, pair-weighted mean over contributing batches
    double val_loss = 0.0;    // nats, infer mode
};

using TrainHistory = std::vector<EpochLoss>;

struct TrainResult {
    TlsModel model;
    TrainHistory history;
    DatasetSplit split;
};

/// Gradient buffers for both heads.
struct ModelGradients {
    nn::HeadGradients text;
    nn::HeadGradients spectrum;

    static ModelGradients zeros_like(const TlsModel& model);
    std::vector<nn::ParamBlock> blocks();
};

/// Parameter blocks of both heads: text head first, then spectrum head.
std::vector<nn::ParamBlock> model_parameter_blocks(TlsModel& model);

inline constexpr std::uint64_t kTextStream = 0;
inline constexpr std::uint64_t kSpectrumStream = 1;

/// Head outputs for every row of `inputs`. In train mode row i's dropout mask
/// comes from make_rng(rng_seed, {i, stream}). `caches` receives the forward
/// caches when non-null.
nn::Matrix project_rows(const nn::ProjectionHead& head, const nn::Matrix& inputs, nn::Mode mode,
                        std::uint64_t rng_seed, std::uint64_t stream, std::vector<nn::ForwardCache>* caches = nullptr);

/// Contrastive loss of one batch through both heads: project (train mode
/// draws per-sample dropout masks from `rng_seed`), L2-normalise rows, score.
/// When `grads` is non-null the parameter gradients are added to it.
/// `text_inputs` is B x 768, `spectrum_inputs` B x 3200. `targets_out`
/// receives the soft targets used; `fixed_targets` overrides them.
LossBreakdown batch_loss(const TlsModel& model, const nn::Matrix& text_inputs, const nn::Matrix& spectrum_inputs,
                         nn::Mode mode, std::uint64_t rng_seed, ModelGradients* grads,
                         const nn::Matrix* fixed_targets = nullptr, nn::Matrix* targets_out = nullptr);

/// Propagates annotations, splits by asset, and trains both heads.
TrainResult train(const CorpusDatabase& corpus, const EmbeddingTable& embeddings, const TrainConfig& config);

/// The split `train` used for `config` on `corpus`.
DatasetSplit training_split(const CorpusDatabase& corpus, const TrainConfig& config);

/// Infer-mode contrastive loss over `pairs`, batched like training with a
/// fixed pair order.
double dataset_loss(const TlsModel& model, const CorpusDatabase& corpus, const EmbeddingTable& embeddings,
                    const PairDataset& pairs);

struct QueryPrecision {
    std::string query;
    FaultClass fault_class = FaultClass::Healthy;
    double precision = 0.0;
    std::size_t relevant_available = 0;  // recordings of this class in the pool
};

struct EvalMetrics {
    double val_loss = 0.0;
    double zero_shot_accuracy = 0.0;
    std::size_t n_recordings = 0;
    std::size_t k = 0;
    std::vector<QueryPrecision> precision_at_k;
    /// Mean over queries whose class occurs in the pool.
    double mean_precision_at_k = 0.0;
};

/// Zero-shot accuracy and precision@k over the distinct recordings of
/// `val_pairs`. Every query must name a class, and every truth class among
/// those recordings must be covered.
EvalMetrics evaluate(const TlsModel& model, const CorpusDatabase& corpus, const EmbeddingTable& embeddings,
                     const PairDataset& val_pairs, std::span<const ClassQuery> queries, std::size_t k = 3,
                     NormalizationMode mode = kDefaultNormalization);

/// {"epoch":i,"train_loss":x,"val_loss":y} per line.
void save_history(const TrainHistory& history, const std::filesystem::path& path);

}  // namespace tlsfd
