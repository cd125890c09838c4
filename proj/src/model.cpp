#include "tlsfd/model.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tlsfd/errors.hpp"
#include "tlsfd/seed.hpp"

namespace tlsfd {

using nlohmann::json;

namespace {

constexpr const char* kModelFormat = "tlsfd-model";
constexpr int kModelVersion = 1;

json head_to_json(const nn::ProjectionHead& h) {
    return {{"in_dim", h.in_dim},       {"out_dim", h.out_dim}, {"dropout_rate", h.dropout_rate},
            {"w1", h.w1.data},          {"b1", h.b1},           {"w2", h.w2.data},
            {"b2", h.b2},               {"ln_gain", h.ln_gain}, {"ln_bias", h.ln_bias}};
}

nn::ProjectionHead head_from_json(const json& j, const char* name) {
    try {
        nn::ProjectionHead h;
        h.in_dim = j.at("in_dim").get<std::size_t>();
        h.out_dim = j.at("out_dim").get<std::size_t>();
        h.dropout_rate = j.at("dropout_rate").get<double>();
        h.w1.rows = h.out_dim;
        h.w1.cols = h.in_dim;
        h.w1.data = j.at("w1").get<std::vector<double>>();
        h.b1 = j.at("b1").get<std::vector<double>>();
        h.w2.rows = h.out_dim;
        h.w2.cols = h.out_dim;
        h.w2.data = j.at("w2").get<std::vector<double>>();
        h.b2 = j.at("b2").get<std::vector<double>>();
        h.ln_gain = j.at("ln_gain").get<std::vector<double>>();
        h.ln_bias = j.at("ln_bias").get<std::vector<double>>();
        h.validate();
        return h;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("model ") + name + ": " + e.what());
    } catch (const Error& e) {
        throw ValidationError(std::string("model ") + name + ": " + e.what());
    }
}

json config_to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"lr", c.lr},
            {"temperature", c.temperature},
            {"val_fraction", c.val_fraction},
            {"seed", c.seed},
            {"shuffle", c.shuffle},
            {"window_days", c.window_days},
            {"dropout_rate", c.dropout_rate}};
}

TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.lr = j.at("lr").get<double>();
    c.temperature = j.at("temperature").get<double>();
    c.val_fraction = j.at("val_fraction").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.shuffle = j.at("shuffle").get<bool>();
    c.window_days = j.at("window_days").get<int>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    return c;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be positive");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0,1)");
    if (window_days < 1) throw ConfigError("window_days must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0,1)");
}

TlsModel TlsModel::init(const TrainConfig& config) {
    config.validate();
    TlsModel m;
    m.text_head = nn::ProjectionHead::init(kTextEmbeddingDim, nn::kProjectionDim, config.dropout_rate,
                                           derive_seed(config.seed, {0x7e47u}));
    m.spectrum_head = nn::ProjectionHead::init(kSpectrumBins, nn::kProjectionDim, config.dropout_rate,
                                               derive_seed(config.seed, {0x5bec7u}));
    m.temperature = config.temperature;
    m.config = config;
    m.seed = config.seed;
    return m;
}

void TlsModel::validate() const {
    text_head.validate();
    spectrum_head.validate();
    if (text_head.in_dim != kTextEmbeddingDim || text_head.out_dim != nn::kProjectionDim) {
        throw ShapeError("text head must map 768 -> 64");
    }
    if (spectrum_head.in_dim != kSpectrumBins || spectrum_head.out_dim != nn::kProjectionDim) {
        throw ShapeError("spectrum head must map 3200 -> 64");
    }
    if (!(temperature > 0.0)) throw ParameterError("temperature must be positive");
}

std::string serialize_model(const TlsModel& m) {
    const json doc = {{"format", kModelFormat},
                      {"version", kModelVersion},
                      {"temperature", m.temperature},
                      {"dropout_rate", m.text_head.dropout_rate},
                      {"seed", m.seed},
                      {"train_config", config_to_json(m.config)},
                      {"text_head", head_to_json(m.text_head)},
                      {"spectrum_head", head_to_json(m.spectrum_head)}};
    return doc.dump() + "\n";
}

TlsModel deserialize_model(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(1, std::string("malformed model document: ") + e.what());
    }
    if (!doc.is_object() || doc.value("format", "") != kModelFormat) {
        throw ValidationError("not a tlsfd-model document");
    }
    if (doc.value("version", 0) != kModelVersion) throw ValidationError("unsupported model version");
    TlsModel m;
    try {
        m.temperature = doc.at("temperature").get<double>();
        m.seed = doc.at("seed").get<std::uint64_t>();
        m.config = config_from_json(doc.at("train_config"));
    } catch (const json::exception& e) {
        throw ValidationError(std::string("model: ") + e.what());
    }
    m.text_head = head_from_json(doc.at("text_head"), "text_head");
    m.spectrum_head = head_from_json(doc.at("spectrum_head"), "spectrum_head");
    m.validate();
    return m;
}

void save_model(const TlsModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::out | std::ios::trunc | std::ios::binary);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << serialize_model(model);
    if (!out) throw Error("failed writing '" + path.string() + "'");
}

TlsModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_model(ss.str());
}

}  // namespace tlsfd
