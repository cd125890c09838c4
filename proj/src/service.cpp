#include "tlsfd/service.hpp"

#include <algorithm>
#include <charconv>
#include <stdexcept>

#include <httplib.h>

#include "tlsfd/errors.hpp"
#include "tlsfd/time_util.hpp"

namespace tlsfd {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxRecordingsLimit = 1000;

class BadRequest : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::vector<const Recording*> all_recordings(const CorpusDatabase& corpus) {
    std::vector<const Recording*> items;
    items.reserve(corpus.recordings.size());
    for (const Recording& r : corpus.recordings) items.push_back(&r);
    return items;
}

json error_body(const std::string& message) { return json{{"error", message}}; }

json parse_object(const std::string& body) {
    json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded()) throw BadRequest("request body is not valid JSON");
    if (!doc.is_object()) throw BadRequest("request body must be a JSON object");
    return doc;
}

NormalizationMode read_mode(const json& doc) {
    const auto it = doc.find("mode");
    if (it == doc.end() || it->is_null()) return kDefaultNormalization;
    if (!it->is_string()) throw BadRequest("\"mode\" must be a string");
    const auto mode = parse_normalization_mode(it->get<std::string>());
    if (!mode) throw BadRequest("\"mode\" must be one of \"train\", \"paper\", \"none\"");
    return *mode;
}

std::string read_text(const json& doc, const char* key) {
    const auto it = doc.find(key);
    if (it == doc.end()) throw BadRequest(std::string("missing \"") + key + "\"");
    if (!it->is_string()) throw BadRequest(std::string("\"") + key + "\" must be a string");
    std::string s = it->get<std::string>();
    if (normalize_text(s).empty()) throw BadRequest(std::string("\"") + key + "\" is empty");
    return s;
}

std::vector<std::string> read_strings(const json& doc, const char* key) {
    const auto it = doc.find(key);
    if (it == doc.end()) throw BadRequest(std::string("missing \"") + key + "\"");
    if (!it->is_array()) throw BadRequest(std::string("\"") + key + "\" must be an array of strings");
    if (it->empty()) throw BadRequest(std::string("\"") + key + "\" is empty");
    std::vector<std::string> out;
    for (const json& v : *it) {
        if (!v.is_string()) throw BadRequest(std::string("\"") + key + "\" must be an array of strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

std::size_t read_param(const std::map<std::string, std::string>& params, const char* key, std::size_t fallback) {
    const auto it = params.find(key);
    if (it == params.end()) return fallback;
    const std::string& s = it->second;
    std::size_t value = 0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (s.empty() || ec != std::errc() || end != s.data() + s.size()) {
        throw BadRequest(std::string("\"") + key + "\" must be a non-negative integer");
    }
    return value;
}

json truth_json(const std::optional<FaultClass>& c) { return c ? json(std::string(to_string(*c))) : json(nullptr); }

ServiceResponse do_retrieve(const ServiceState& state, const ServiceRequest& req) {
    const json doc = parse_object(req.body);
    const std::string query = read_text(doc, "query");
    const auto k_it = doc.find("k");
    if (k_it == doc.end()) throw BadRequest("missing \"k\"");
    if (!k_it->is_number_integer()) throw BadRequest("\"k\" must be an integer");
    if (k_it->get<std::int64_t>() < 1) throw BadRequest("\"k\" must be >= 1");
    const auto k = static_cast<std::size_t>(k_it->get<std::int64_t>());
    const NormalizationMode mode = read_mode(doc);

    const auto hits = retrieve(state.model(), state.embeddings(), state.spectra(), query, k, mode);
    json results = json::array();
    for (const RetrievalHit& hit : hits) {
        const Recording& rec = state.lookup().recording(hit.recording_id);
        const auto note = nearest_annotation(state.corpus(), rec, state.model().config.window_days);
        results.push_back({{"recording_id", hit.recording_id},
                           {"score", hit.score},
                           {"annotation", note ? json(*note) : json(nullptr)},
                           {"truth_class", truth_json(hit.truth_class)},
                           {"spectrum_preview", spectrum_preview(rec.spectrum)}});
    }
    return {200, json{{"results", std::move(results)}}};
}

ServiceResponse do_zeroshot(const ServiceState& state, const ServiceRequest& req) {
    const json doc = parse_object(req.body);
    const auto queries = read_strings(doc, "queries");
    const auto ids = read_strings(doc, "recording_ids");
    const NormalizationMode mode = read_mode(doc);
    for (const auto& q : queries) {
        if (normalize_text(q).empty()) throw BadRequest("\"queries\" contains an empty query");
    }
    std::vector<const Recording*> items;
    for (const auto& id : ids) {
        const Recording* r = state.lookup().find_recording(id);
        if (r == nullptr) throw NotFoundError("unknown recording_id '" + id + "'");
        items.push_back(r);
    }
    const ZeroShotResult zs = zero_shot(state.model(), state.embeddings(), items, queries, mode);
    json scores = json::array();
    for (std::size_t q = 0; q < queries.size(); ++q) {
        json row = json::array();
        for (std::size_t s = 0; s < items.size(); ++s) row.push_back(zs.scores.scores(q, s));
        scores.push_back(std::move(row));
    }
    return {200, json{{"scores", std::move(scores)}, {"argmax", zs.argmax}}};
}

ServiceResponse do_recordings(const ServiceState& state, const ServiceRequest& req) {
    const std::size_t limit = read_param(req.params, "limit", kDefaultRecordingsLimit);
    const std::size_t offset = read_param(req.params, "offset", 0);
    if (limit > kMaxRecordingsLimit) {
        throw BadRequest("\"limit\" must be at most " + std::to_string(kMaxRecordingsLimit));
    }
    const auto& recs = state.corpus().recordings;
    json list = json::array();
    for (std::size_t i = std::min(offset, recs.size()); i < recs.size() && list.size() < limit; ++i) {
        const Recording& r = recs[i];
        list.push_back({{"recording_id", r.recording_id},
                        {"asset_id", r.asset_id},
                        {"timestamp", format_utc(r.timestamp)},
                        {"truth_class", truth_json(r.truth_class)}});
    }
    return {200, json{{"total", recs.size()}, {"offset", offset}, {"limit", limit}, {"recordings", std::move(list)}}};
}

ServiceResponse route(const ServiceState& state, const ServiceRequest& req) {
    if (req.method == "OPTIONS") return {204, nullptr};
    struct Route {
        const char* method;
        const char* path;
        ServiceResponse (*fn)(const ServiceState&, const ServiceRequest&);
    };
    static constexpr Route routes[] = {
        {"GET", "/health", [](const ServiceState&, const ServiceRequest&) {
             return ServiceResponse{200, json{{"status", "ok"}}};
         }},
        {"POST", "/retrieve", do_retrieve},
        {"POST", "/zeroshot", do_zeroshot},
        {"GET", "/recordings", do_recordings},
    };
    bool path_known = false;
    for (const Route& r : routes) {
        if (req.path != r.path) continue;
        path_known = true;
        if (req.method == r.method) return r.fn(state, req);
    }
    if (path_known) return {405, error_body("method " + req.method + " not allowed on " + req.path)};
    return {404, error_body("no such endpoint: " + req.path)};
}

}  // namespace

std::vector<double> spectrum_preview(std::span<const double> spectrum) {
    if (spectrum.size() != kSpectrumBins) {
        throw ShapeError("spectrum has " + std::to_string(spectrum.size()) + " values, expected " +
                         std::to_string(kSpectrumBins));
    }
    constexpr std::size_t block = kSpectrumBins / kPreviewBins;
    std::vector<double> out(kPreviewBins);
    for (std::size_t i = 0; i < kPreviewBins; ++i) {
        out[i] = *std::max_element(spectrum.begin() + i * block, spectrum.begin() + (i + 1) * block);
    }
    return out;
}

ServiceState::ServiceState(TlsModel model, CorpusDatabase corpus, EmbeddingTable embeddings)
    : model_(std::move(model)),
      corpus_(std::move(corpus)),
      embeddings_(std::move(embeddings)),
      lookup_(corpus_),
      spectra_(model_, all_recordings(corpus_)),
      started_(std::chrono::steady_clock::now()) {}

void ServiceState::count(int status) const noexcept {
    requests_.fetch_add(1);
    if (status >= 500) {
        server_errors_.fetch_add(1);
    } else if (status >= 400) {
        client_errors_.fetch_add(1);
    }
}

ServiceResponse handle_request(const ServiceState& state, const ServiceRequest& request) {
    ServiceResponse res;
    try {
        res = route(state, request);
    } catch (const BadRequest& e) {
        res = {400, error_body(e.what())};
    } catch (const ParameterError& e) {
        res = {400, error_body(e.what())};
    } catch (const NotFoundError& e) {
        res = {404, error_body(e.what())};
    } catch (const std::exception& e) {
        res = {500, error_body(e.what())};
    }
    state.count(res.status);
    return res;
}

HttpService::HttpService(const ServiceState& state) : state_(state), server_(std::make_unique<httplib::Server>()) {
    // httplib's default sets SO_REUSEPORT, which lets a second service share
    // the port instead of failing to bind.
    server_->set_socket_options([](int sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });
    server_->set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                  {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                  {"Access-Control-Allow-Headers", "Content-Type"}});
    const auto handler = [this](const httplib::Request& hreq, httplib::Response& hres) {
        ServiceRequest req{hreq.method, hreq.path, {}, hreq.body};
        for (const auto& [key, value] : hreq.params) req.params.emplace(key, value);
        const ServiceResponse res = handle_request(state_, req);
        hres.status = res.status;
        if (!res.body.is_null()) hres.set_content(res.body.dump(), "application/json");
    };
    server_->Get(".*", handler);
    server_->Post(".*", handler);
    server_->Options(".*", handler);
    server_->Put(".*", handler);
    server_->Delete(".*", handler);
}

HttpService::~HttpService() { stop(); }

bool HttpService::bind(const std::string& host, int port) {
    if (port == 0) {
        port_ = server_->bind_to_any_port(host);
        return port_ > 0;
    }
    if (!server_->bind_to_port(host, port)) return false;
    port_ = port;
    return true;
}

bool HttpService::listen() { return server_->listen_after_bind(); }

void HttpService::stop() {
    if (server_->is_running()) server_->stop();
}

bool HttpService::wait_until_ready() const {
    server_->wait_until_ready();
    return server_->is_running();
}

}  // namespace tlsfd
