#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tlsfd/corpus.hpp"
#include "tlsfd/inference.hpp"
#include "tlsfd/model.hpp"
#include "tlsfd/text_embed.hpp"

namespace httplib {
class Server;
}

namespace tlsfd {

inline constexpr std::size_t kPreviewBins = 320;
inline constexpr std::size_t kDefaultRecordingsLimit = 100;

/// Max over each 10-bin block of a 3200-bin spectrum.
std::vector<double> spectrum_preview(std::span<const double> spectrum);

/// Everything the service reads. Built once; never mutated afterwards except
/// for the request counters.
class ServiceState {
public:
    ServiceState(TlsModel model, CorpusDatabase corpus, EmbeddingTable embeddings);
    ServiceState(const ServiceState&) = delete;
    ServiceState& operator=(const ServiceState&) = delete;

    const TlsModel& model() const noexcept { return model_; }
    const CorpusDatabase& corpus() const noexcept { return corpus_; }
    const EmbeddingTable& embeddings() const noexcept { return embeddings_; }
    const CorpusIndex& lookup() const noexcept { return lookup_; }
    const SpectrumIndex& spectra() const noexcept { return spectra_; }
    std::chrono::steady_clock::time_point started() const noexcept { return started_; }

    std::uint64_t requests() const noexcept { return requests_.load(); }
    std::uint64_t client_errors() const noexcept { return client_errors_.load(); }
    std::uint64_t server_errors() const noexcept { return server_errors_.load(); }
    void count(int status) const noexcept;

private:
    TlsModel model_;
    CorpusDatabase corpus_;
    EmbeddingTable embeddings_;
    CorpusIndex lookup_;
    SpectrumIndex spectra_;
    std::chrono::steady_clock::time_point started_;
    mutable std::atomic<std::uint64_t> requests_{0};
    mutable std::atomic<std::uint64_t> client_errors_{0};
    mutable std::atomic<std::uint64_t> server_errors_{0};
};

struct ServiceRequest {
    std::string method;  // "GET", "POST", "OPTIONS"
    std::string path;
    std::map<std::string, std::string> params;  // query string
    std::string body;
};

struct ServiceResponse {
    int status = 200;
    nlohmann::json body;  // null for bodiless responses
};

/// Routes one request. Never throws; failures become 4xx/5xx with
/// {"error": message}.
ServiceResponse handle_request(const ServiceState& state, const ServiceRequest& request);

/// httplib server bound to a ServiceState.
class HttpService {
public:
    explicit HttpService(const ServiceState& state);
    ~HttpService();

    /// Port 0 picks a free port. False if the port cannot be bound.
    bool bind(const std::string& host, int port);
    int port() const noexcept { return port_; }
    /// Blocks until stop().
    bool listen();
    void stop();
    bool wait_until_ready() const;

private:
    const ServiceState& state_;
    std::unique_ptr<httplib::Server> server_;
    int port_ = -1;
};

}  // namespace tlsfd
