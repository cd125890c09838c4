#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "tlsfd/corpus.hpp"
#include "tlsfd/nn.hpp"
#include "tlsfd/text_embed.hpp"

namespace tlsfd {

struct TrainConfig {
    int epochs = 3;
    int batch_size = 64;
    double lr = 1e-3;
    double temperature = 1.0;
    double val_fraction = 0.2;
    std::uint64_t seed = 1;
    bool shuffle = true;
    int window_days = kDefaultWindowDays;
    double dropout_rate = nn::kDefaultDropout;

    /// Throws ConfigError.
    void validate() const;

    bool operator==(const TrainConfig&) const = default;
};

/// The deployable artifact: both projection heads plus what produced them.
struct TlsModel {
    nn::ProjectionHead text_head;      // 768 -> 64
    nn::ProjectionHead spectrum_head;  // 3200 -> 64
    double temperature = 1.0;
    TrainConfig config;
    std::uint64_t seed = 1;

    /// Freshly initialised heads for `config`.
    static TlsModel init(const TrainConfig& config);

    /// Throws ShapeError unless the heads are 768->64 and 3200->64.
    void validate() const;

    bool operator==(const TlsModel&) const = default;
};

/// Checkpoint document (single JSON object, compact).
std::string serialize_model(const TlsModel& model);
TlsModel deserialize_model(const std::string& text);

void save_model(const TlsModel& model, const std::filesystem::path& path);
TlsModel load_model(const std::filesystem::path& path);

}  // namespace tlsfd
