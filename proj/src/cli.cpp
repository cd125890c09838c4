#include "tlsfd/cli.hpp"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "tlsfd/errors.hpp"
#include "tlsfd/inference.hpp"
#include "tlsfd/model.hpp"
#include "tlsfd/queries.hpp"
#include "tlsfd/service.hpp"
#include "tlsfd/synthgen.hpp"
#include "tlsfd/trainer.hpp"

namespace tlsfd {

using nlohmann::json;

namespace {

std::atomic<HttpService*> g_running_service{nullptr};

extern "C" void stop_service(int) {
    if (HttpService* s = g_running_service.load()) s->stop();
}

void emit(std::ostream& out, const json& record) { out << record.dump() << '\n'; }

json truth_json(const std::optional<FaultClass>& c) { return c ? json(std::string(to_string(*c))) : json(nullptr); }

EmbeddingTable load_embeddings(const std::string& path) {
    return path.empty() ? EmbeddingTable{} : load_embedding_table(path);
}

NormalizationMode mode_or_default(const std::string& name) {
    return parse_normalization_mode(name).value_or(kDefaultNormalization);
}

// Distinct recordings of `pairs`, in first-seen order.
std::vector<const Recording*> pair_recordings(const CorpusDatabase& corpus, const PairDataset& pairs) {
    const CorpusIndex lookup(corpus);
    std::vector<const Recording*> out;
    std::vector<std::string> seen;
    for (const Pair& p : pairs.pairs) {
        if (std::find(seen.begin(), seen.end(), p.recording_id) != seen.end()) continue;
        seen.push_back(p.recording_id);
        out.push_back(&lookup.recording(p.recording_id));
    }
    return out;
}

struct GenArgs {
    std::string config, out;
    std::optional<std::uint64_t> seed;
};

struct TrainArgs {
    std::string corpus, embeddings, out, history;
    TrainConfig config;
};

struct EvalArgs {
    std::string model, corpus, queries, embeddings, mode = "paper";
    std::size_t k = 3;
};

struct RetrieveArgs {
    std::string model, corpus, query, embeddings, mode = "paper";
    std::size_t k = 5;
};

struct ZeroShotArgs {
    std::string model, corpus, queries, embeddings, mode = "paper";
    std::vector<std::string> recordings;
};

struct ServeArgs {
    std::string model, corpus, embeddings, host = "127.0.0.1";
    std::optional<int> port;
};

int run_gen(const GenArgs& a, std::ostream& out, std::ostream& err) {
    GeneratorConfig config = load_generator_config(a.config);
    if (a.seed) config.seed = *a.seed;
    const CorpusDatabase corpus = gen_corpus(config);
    save_corpus(corpus, a.out);
    const PairDataset pairs = propagate_annotations(corpus, config.window_days);
    err << "generated " << corpus.recordings.size() << " recordings on " << corpus.assets.size() << " assets\n";
    emit(out, {{"corpus", a.out},
               {"seed", config.seed},
               {"assets", corpus.assets.size()},
               {"recordings", corpus.recordings.size()},
               {"annotations", corpus.annotations.size()},
               {"pairs", pairs.size()}});
    return kExitOk;
}

int run_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    const CorpusDatabase corpus = load_corpus(a.corpus);
    const EmbeddingTable table = load_embeddings(a.embeddings);
    const TrainResult result = train(corpus, table, a.config);
    save_model(result.model, a.out);
    if (!a.history.empty()) save_history(result.history, a.history);
    for (const EpochLoss& e : result.history) {
        emit(out, {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
    }
    if (table.fallback_count() > 0) {
        err << table.fallback_count() << " annotation texts used the hashing fallback embedding\n";
    }
    emit(out, {{"model", a.out},
               {"train_pairs", result.split.train.size()},
               {"val_pairs", result.split.val.size()},
               {"epochs", a.config.epochs}});
    return kExitOk;
}

int run_eval(const EvalArgs& a, std::ostream& out, std::ostream&) {
    const TlsModel model = load_model(a.model);
    const CorpusDatabase corpus = load_corpus(a.corpus);
    const EmbeddingTable table = load_embeddings(a.embeddings);
    const auto queries = load_queries(a.queries);
    const NormalizationMode mode = mode_or_default(a.mode);
    const DatasetSplit split = training_split(corpus, model.config);

    std::vector<ClassQuery> classed;
    std::vector<std::string> open;
    for (const auto& q : queries) {
        if (q.fault_class) {
            classed.push_back(q);
        } else {
            open.push_back(q.text);
        }
    }
    if (!classed.empty()) {
        const EvalMetrics m = evaluate(model, corpus, table, split.val, classed, a.k, mode);
        for (const QueryPrecision& p : m.precision_at_k) {
            emit(out, {{"query", p.query},
                       {"class", std::string(to_string(p.fault_class))},
                       {"precision_at_k", p.precision},
                       {"relevant_available", p.relevant_available}});
        }
        emit(out, {{"val_loss", m.val_loss},
                   {"zero_shot_accuracy", m.zero_shot_accuracy},
                   {"mean_precision_at_k", m.mean_precision_at_k},
                   {"k", m.k},
                   {"n_recordings", m.n_recordings}});
    }
    if (!open.empty()) {
        const SpectrumIndex index(model, pair_recordings(corpus, split.val));
        for (const auto& q : open) {
            json top = json::array();
            for (const auto& hit : retrieve(model, table, index, q, a.k, mode)) {
                top.push_back({{"recording_id", hit.recording_id},
                               {"score", hit.score},
                               {"truth_class", truth_json(hit.truth_class)}});
            }
            emit(out, {{"query", q}, {"class", nullptr}, {"top", std::move(top)}});
        }
    }
    return kExitOk;
}

int run_retrieve(const RetrieveArgs& a, std::ostream& out, std::ostream&) {
    const TlsModel model = load_model(a.model);
    const CorpusDatabase corpus = load_corpus(a.corpus);
    const EmbeddingTable table = load_embeddings(a.embeddings);
    const auto hits = retrieve(model, table, corpus, a.query, a.k, mode_or_default(a.mode));
    for (std::size_t rank = 0; rank < hits.size(); ++rank) {
        const auto& h = hits[rank];
        emit(out, {{"rank", rank + 1},
                   {"recording_id", h.recording_id},
                   {"score", h.score},
                   {"annotation", h.annotation ? json(*h.annotation) : json(nullptr)},
                   {"truth_class", truth_json(h.truth_class)}});
    }
    return kExitOk;
}

int run_zeroshot(const ZeroShotArgs& a, std::ostream& out, std::ostream&) {
    const TlsModel model = load_model(a.model);
    const CorpusDatabase corpus = load_corpus(a.corpus);
    const EmbeddingTable table = load_embeddings(a.embeddings);
    std::vector<std::string> texts;
    for (const auto& q : load_queries(a.queries)) texts.push_back(q.text);
    const CorpusIndex lookup(corpus);
    std::vector<const Recording*> items;
    for (const auto& id : a.recordings) {
        const Recording* r = lookup.find_recording(id);
        if (r == nullptr) throw NotFoundError("unknown recording id '" + id + "'");
        items.push_back(r);
    }
    const ZeroShotResult zs = zero_shot(model, table, items, texts, mode_or_default(a.mode));
    for (std::size_t s = 0; s < items.size(); ++s) {
        json scores = json::array();
        for (std::size_t q = 0; q < texts.size(); ++q) scores.push_back(zs.scores.scores(q, s));
        emit(out, {{"recording_id", items[s]->recording_id},
                   {"queries", texts},
                   {"scores", std::move(scores)},
                   {"argmax", zs.argmax[s]},
                   {"best_query", texts[zs.argmax[s]]},
                   {"truth_class", truth_json(items[s]->truth_class)}});
    }
    return kExitOk;
}

int run_serve(const ServeArgs& a, std::ostream& out, std::ostream& err) {
    int port = kDefaultPort;
    if (const char* env = std::getenv("TLSFD_PORT"); env != nullptr && *env != '\0') {
        try {
            port = std::stoi(env);
        } catch (const std::exception&) {
            throw ConfigError(std::string("TLSFD_PORT is not a port number: ") + env);
        }
    }
    if (a.port) port = *a.port;
    if (port < 0 || port > 65535) throw ConfigError("port out of range: " + std::to_string(port));

    const ServiceState state(load_model(a.model), load_corpus(a.corpus), load_embeddings(a.embeddings));
    HttpService service(state);
    if (!service.bind(a.host, port)) {
        err << "error: cannot bind " << a.host << ":" << port << "\n";
        return kExitRuntime;
    }
    emit(out, {{"listening", a.host}, {"port", service.port()}, {"recordings", state.corpus().recordings.size()}});
    out.flush();
    g_running_service.store(&service);
    std::signal(SIGINT, stop_service);
    std::signal(SIGTERM, stop_service);
    const bool ok = service.listen();
    g_running_service.store(nullptr);
    err << "served " << state.requests() << " requests (" << state.client_errors() << " client errors, "
        << state.server_errors() << " server errors)\n";
    return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Technical language supervision for vibration fault diagnosis", "tlsfd"};
    app.require_subcommand(1);
    const auto modes = CLI::IsMember({"train", "paper", "none"});

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic corpus");
    gen_cmd->add_option("--config", gen.config, "Generator config file")->required();
    gen_cmd->add_option("--out", gen.out, "Corpus output file")->required();
    gen_cmd->add_option("--seed", gen.seed, "Override the config seed");

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train both projection heads");
    train_cmd->add_option("--corpus", tr.corpus, "Corpus file")->required();
    train_cmd->add_option("--embeddings", tr.embeddings, "Sentence embedding table");
    train_cmd->add_option("--out", tr.out, "Model output file")->required();
    train_cmd->add_option("--history", tr.history, "Per-epoch loss output file");
    train_cmd->add_option("--epochs", tr.config.epochs)->capture_default_str();
    train_cmd->add_option("--batch", tr.config.batch_size)->capture_default_str();
    train_cmd->add_option("--lr", tr.config.lr)->capture_default_str();
    train_cmd->add_option("--tau", tr.config.temperature)->capture_default_str();
    train_cmd->add_option("--val-fraction", tr.config.val_fraction)->capture_default_str();
    train_cmd->add_option("--seed", tr.config.seed)->capture_default_str();

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Zero-shot accuracy and precision@k on held-out assets");
    eval_cmd->add_option("--model", ev.model)->required();
    eval_cmd->add_option("--corpus", ev.corpus)->required();
    eval_cmd->add_option("--queries", ev.queries)->required();
    eval_cmd->add_option("--embeddings", ev.embeddings);
    eval_cmd->add_option("--k", ev.k)->capture_default_str()->check(CLI::PositiveNumber);
    eval_cmd->add_option("--mode", ev.mode)->capture_default_str()->check(modes);

    RetrieveArgs rt;
    auto* retrieve_cmd = app.add_subcommand("retrieve", "Rank recordings against a text query");
    retrieve_cmd->add_option("--model", rt.model)->required();
    retrieve_cmd->add_option("--corpus", rt.corpus)->required();
    retrieve_cmd->add_option("--query", rt.query)->required();
    retrieve_cmd->add_option("--embeddings", rt.embeddings);
    retrieve_cmd->add_option("--k", rt.k)->capture_default_str()->check(CLI::PositiveNumber);
    retrieve_cmd->add_option("--mode", rt.mode)->capture_default_str()->check(modes);

    ZeroShotArgs zs;
    auto* zs_cmd = app.add_subcommand("zeroshot", "Score recordings against a query set");
    zs_cmd->add_option("--model", zs.model)->required();
    zs_cmd->add_option("--corpus", zs.corpus)->required();
    zs_cmd->add_option("--queries", zs.queries)->required();
    zs_cmd->add_option("--recordings", zs.recordings, "Comma-separated recording ids")->required()->delimiter(',');
    zs_cmd->add_option("--embeddings", zs.embeddings);
    zs_cmd->add_option("--mode", zs.mode)->capture_default_str()->check(modes);

    ServeArgs sv;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP JSON service");
    serve_cmd->add_option("--model", sv.model)->required();
    serve_cmd->add_option("--corpus", sv.corpus)->required();
    serve_cmd->add_option("--port", sv.port, "Overrides TLSFD_PORT")->check(CLI::Range(0, 65535));
    serve_cmd->add_option("--host", sv.host)->capture_default_str();
    serve_cmd->add_option("--embeddings", sv.embeddings);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    }

    try {
        if (gen_cmd->parsed()) return run_gen(gen, out, err);
        if (train_cmd->parsed()) return run_train(tr, out, err);
        if (eval_cmd->parsed()) return run_eval(ev, out, err);
        if (retrieve_cmd->parsed()) return run_retrieve(rt, out, err);
        if (zs_cmd->parsed()) return run_zeroshot(zs, out, err);
        if (serve_cmd->parsed()) return run_serve(sv, out, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

int cli_dispatch(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return cli_dispatch(args, std::cout, std::cerr);
}

}  // namespace tlsfd
