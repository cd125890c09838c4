#include "tlsfd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "tlsfd/errors.hpp"
#include "tlsfd/jsonl.hpp"
#include "tlsfd/seed.hpp"

namespace tlsfd {

using nn::Matrix;

ModelGradients ModelGradients::zeros_like(const TlsModel& model) {
    return {nn::HeadGradients::zeros_like(model.text_head), nn::HeadGradients::zeros_like(model.spectrum_head)};
}

std::vector<nn::ParamBlock> ModelGradients::blocks() {
    auto out = text.blocks("text.");
    auto s = spectrum.blocks("spectrum.");
    out.insert(out.end(), s.begin(), s.end());
    return out;
}

std::vector<nn::ParamBlock> model_parameter_blocks(TlsModel& model) {
    auto out = nn::parameter_blocks(model.text_head, "text.");
    auto s = nn::parameter_blocks(model.spectrum_head, "spectrum.");
    out.insert(out.end(), s.begin(), s.end());
    return out;
}

Matrix project_rows(const nn::ProjectionHead& head, const Matrix& inputs, nn::Mode mode, std::uint64_t rng_seed,
                    std::uint64_t stream, std::vector<nn::ForwardCache>* caches) {
    Matrix out(inputs.rows, head.out_dim);
    if (caches != nullptr) {
        caches->clear();
        caches->reserve(inputs.rows);
    }
    for (std::size_t i = 0; i < inputs.rows; ++i) {
        Rng rng = make_rng(rng_seed, {i, stream});
        nn::ForwardCache cache = nn::head_forward(head, inputs.row(i), mode, &rng);
        std::copy(cache.output.begin(), cache.output.end(), out.row(i).begin());
        if (caches != nullptr) caches->push_back(std::move(cache));
    }
    return out;
}

LossBreakdown batch_loss(const TlsModel& model, const Matrix& text_inputs, const Matrix& spectrum_inputs,
                         nn::Mode mode, std::uint64_t rng_seed, ModelGradients* grads,
                         const Matrix* fixed_targets, Matrix* targets_out) {
    const std::size_t b = text_inputs.rows;
    if (spectrum_inputs.rows != b) throw ShapeError("text and spectrum batches differ in size");

    std::vector<nn::ForwardCache> text_caches;
    std::vector<nn::ForwardCache> spectrum_caches;
    const Matrix zt = project_rows(model.text_head, text_inputs, mode, rng_seed, kTextStream, &text_caches);
    const Matrix zs = project_rows(model.spectrum_head, spectrum_inputs, mode, rng_seed, kSpectrumStream,
                                   &spectrum_caches);

    nn::Vec text_norms;
    nn::Vec spectrum_norms;
    const Matrix ut = l2_normalize_rows(zt, &text_norms);
    const Matrix us = l2_normalize_rows(zs, &spectrum_norms);

    if (targets_out != nullptr) {
        *targets_out = fixed_targets != nullptr ? *fixed_targets : soft_targets(ut, us, model.temperature);
    }
    LossGradients lg;
    const LossBreakdown loss =
        contrastive_loss_and_gradients(ut, us, model.temperature, grads != nullptr ? &lg : nullptr, fixed_targets);
    if (grads != nullptr) {
        const Matrix dzt = l2_normalize_rows_backward(ut, text_norms, lg.d_text);
        const Matrix dzs = l2_normalize_rows_backward(us, spectrum_norms, lg.d_spectrum);
        // Fixed index order keeps accumulation bitwise reproducible.
        for (std::size_t i = 0; i < b; ++i) {
            nn::head_backward(model.text_head, text_caches[i], dzt.row(i), grads->text, false);
            nn::head_backward(model.spectrum_head, spectrum_caches[i], dzs.row(i), grads->spectrum, false);
        }
    }
    return loss;
}

namespace {

// Pairs resolved to row indices into shared input tables.
struct ResolvedPairs {
    std::vector<std::size_t> text_row;
    std::vector<const Recording*> recording;
};

class InputTables {
public:
    InputTables(const CorpusDatabase& corpus, const EmbeddingTable& embeddings)
        : embeddings_(embeddings), index_(corpus) {}

    ResolvedPairs resolve(const PairDataset& pairs) {
        ResolvedPairs out;
        out.text_row.reserve(pairs.size());
        out.recording.reserve(pairs.size());
        for (const Pair& p : pairs.pairs) {
            const Annotation& a = index_.annotation(p.annotation_id);
            const std::string key = normalize_text(a.text);
            auto it = text_rows_.find(key);
            if (it == text_rows_.end()) {
                it = text_rows_.emplace(key, texts_.size()).first;
                texts_.push_back(embeddings_.embed(a.text));
            }
            out.text_row.push_back(it->second);
            out.recording.push_back(&index_.recording(p.recording_id));
        }
        return out;
    }

    void fill(const ResolvedPairs& pairs, std::span<const std::size_t> members, Matrix& text, Matrix& spectrum) const {
        text = Matrix(members.size(), kTextEmbeddingDim);
        spectrum = Matrix(members.size(), kSpectrumBins);
        for (std::size_t r = 0; r < members.size(); ++r) {
            const auto& t = texts_[pairs.text_row[members[r]]];
            std::copy(t.begin(), t.end(), text.row(r).begin());
            const auto& s = pairs.recording[members[r]]->spectrum;
            std::copy(s.begin(), s.end(), spectrum.row(r).begin());
        }
    }

private:
    const EmbeddingTable& embeddings_;
    CorpusIndex index_;
    std::map<std::string, std::size_t> text_rows_;
    std::vector<nn::Vec> texts_;
};

// Pair-weighted mean infer-mode loss over fixed-order batches. Batches of one
// pair have identically zero loss and are left out of the mean.
double infer_loss(const TlsModel& model, const InputTables& tables, const ResolvedPairs& pairs, std::size_t batch_size,
                  std::uint64_t order_seed) {
    std::vector<std::size_t> order(pairs.recording.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Pair lists are grouped by annotation; mix them so batches resemble training batches.
    Rng rng = make_rng(order_seed, {0x7a1u});
    std::shuffle(order.begin(), order.end(), rng);

    double weighted = 0.0;
    std::size_t counted = 0;
    Matrix text;
    Matrix spectrum;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, order.size() - start);
        if (n < 2) continue;
        tables.fill(pairs, std::span(order).subspan(start, n), text, spectrum);
        const double loss = batch_loss(model, text, spectrum, nn::Mode::Infer, 0, nullptr).total;
        weighted += loss * static_cast<double>(n);
        counted += n;
    }
    if (counted == 0) throw Error("no batch with at least 2 pairs to evaluate");
    return weighted / static_cast<double>(counted);
}

}  // namespace

DatasetSplit training_split(const CorpusDatabase& corpus, const TrainConfig& config) {
    const PairDataset pairs = propagate_annotations(corpus, config.window_days);
    if (pairs.empty()) throw Error("corpus yields no annotation/recording pairs");
    return split_by_asset(pairs, corpus, config.val_fraction, config.seed);
}

TrainResult train(const CorpusDatabase& corpus, const EmbeddingTable& embeddings, const TrainConfig& config) {
    config.validate();
    TrainResult result;
    result.split = training_split(corpus, config);
    result.model = TlsModel::init(config);
    TlsModel& model = result.model;

    InputTables tables(corpus, embeddings);
    const ResolvedPairs train_pairs = tables.resolve(result.split.train);
    const ResolvedPairs val_pairs = tables.resolve(result.split.val);
    const auto batch_size = static_cast<std::size_t>(config.batch_size);

    nn::Adam optimizer({config.lr});
    auto params = model_parameter_blocks(model);
    ModelGradients grads = ModelGradients::zeros_like(model);
    auto grad_blocks = grads.blocks();

    std::vector<std::size_t> order(train_pairs.recording.size());
    Matrix text;
    Matrix spectrum;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        if (config.shuffle) {
            Rng rng = make_rng(config.seed, {0x5u, static_cast<std::uint64_t>(epoch)});
            std::shuffle(order.begin(), order.end(), rng);
        }
        double weighted = 0.0;
        std::size_t counted = 0;
        std::size_t batch = 0;
        for (std::size_t start = 0; start < order.size(); start += batch_size, ++batch) {
            const std::size_t n = std::min(batch_size, order.size() - start);
            if (n < 2) continue;
            tables.fill(train_pairs, std::span(order).subspan(start, n), text, spectrum);
            for (auto& g : grad_blocks) std::fill(g.values.begin(), g.values.end(), 0.0);
            const std::uint64_t batch_seed =
                derive_seed(config.seed, {0xba7c4u, static_cast<std::uint64_t>(epoch), batch});
            const LossBreakdown loss = batch_loss(model, text, spectrum, nn::Mode::Train, batch_seed, &grads);
            if (!std::isfinite(loss.total)) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << ", batch " << batch;
                throw NumericError(msg.str());
            }
            try {
                optimizer.step(params, grad_blocks);
            } catch (const NumericError& e) {
                std::ostringstream msg;
                msg << "epoch " << epoch << ", batch " << batch << ": " << e.what();
                throw NumericError(msg.str());
            }
            ++model.text_head.version;
            ++model.spectrum_head.version;
            weighted += loss.total * static_cast<double>(n);
            counted += n;
        }
        if (counted == 0) throw Error("training split has no batch with at least 2 pairs");

        EpochLoss record;
        record.epoch = epoch;
        record.train_loss = weighted / static_cast<double>(counted);
        record.val_loss = infer_loss(model, tables, val_pairs, batch_size, config.seed);
        result.history.push_back(record);
    }
    return result;
}

double dataset_loss(const TlsModel& model, const CorpusDatabase& corpus, const EmbeddingTable& embeddings,
                    const PairDataset& pairs) {
    InputTables tables(corpus, embeddings);
    const ResolvedPairs resolved = tables.resolve(pairs);
    return infer_loss(model, tables, resolved, static_cast<std::size_t>(model.config.batch_size), model.config.seed);
}

EvalMetrics evaluate(const TlsModel& model, const CorpusDatabase& corpus, const EmbeddingTable& embeddings,
                     const PairDataset& val_pairs, std::span<const ClassQuery> queries, std::size_t k,
                     NormalizationMode mode) {
    if (val_pairs.empty()) throw Error("evaluation needs a non-empty validation set");
    if (queries.empty()) throw ConfigError("evaluation needs at least one query");
    if (k < 1) throw ParameterError("k must be >= 1");
    for (const auto& q : queries) {
        if (!q.fault_class) throw ConfigError("evaluation query '" + q.text + "' names no fault class");
    }

    const CorpusIndex index(corpus);
    std::set<std::string> seen;
    std::vector<const Recording*> items;
    for (const Pair& p : val_pairs.pairs) {
        if (seen.insert(p.recording_id).second) items.push_back(&index.recording(p.recording_id));
    }
    std::set<FaultClass> covered;
    for (const auto& q : queries) covered.insert(*q.fault_class);
    std::map<FaultClass, std::size_t> class_counts;
    for (const Recording* r : items) {
        if (!r->truth_class) throw ConfigError("recording '" + r->recording_id + "' has no truth_class");
        if (!covered.contains(*r->truth_class)) {
            throw ConfigError("no query covers class " + std::string(to_string(*r->truth_class)));
        }
        ++class_counts[*r->truth_class];
    }

    EvalMetrics m;
    m.val_loss = dataset_loss(model, corpus, embeddings, val_pairs);
    m.n_recordings = items.size();
    m.k = k;

    std::vector<std::string> texts;
    for (const auto& q : queries) texts.push_back(q.text);
    const ZeroShotResult zs = zero_shot(model, embeddings, items, texts, mode);
    std::size_t correct = 0;
    for (std::size_t s = 0; s < items.size(); ++s) {
        if (*queries[zs.argmax[s]].fault_class == *items[s]->truth_class) ++correct;
    }
    m.zero_shot_accuracy = static_cast<double>(correct) / static_cast<double>(items.size());

    const SpectrumIndex spectra(model, items);
    double sum = 0.0;
    std::size_t contributing = 0;
    for (const auto& q : queries) {
        const auto hits = retrieve(model, embeddings, spectra, q.text, k, mode);
        std::size_t relevant = 0;
        for (const auto& h : hits) relevant += (h.truth_class == q.fault_class) ? 1 : 0;
        QueryPrecision qp;
        qp.query = q.text;
        qp.fault_class = *q.fault_class;
        qp.precision = static_cast<double>(relevant) / static_cast<double>(hits.size());
        const auto c = class_counts.find(*q.fault_class);
        qp.relevant_available = c == class_counts.end() ? 0 : c->second;
        if (qp.relevant_available > 0) {
            sum += qp.precision;
            ++contributing;
        }
        m.precision_at_k.push_back(qp);
    }
    m.mean_precision_at_k = contributing == 0 ? 0.0 : sum / static_cast<double>(contributing);
    return m;
}

void save_history(const TrainHistory& history, const std::filesystem::path& path) {
    auto out = jsonl::open_for_write(path);
    for (const auto& e : history) {
        jsonl::write_line(out, {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
    }
}

}  // namespace tlsfd
