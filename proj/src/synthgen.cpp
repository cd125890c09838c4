#include "tlsfd/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

#include "tlsfd/errors.hpp"
#include "tlsfd/jsonl.hpp"
#include "tlsfd/seed.hpp"

namespace tlsfd {

namespace {

constexpr double kPeakSigmaBins = 3.0;
constexpr int kBearingHarmonics = 8;
constexpr int kLoosenessHarmonics = 10;
constexpr double kBearingPeakGain = 200.0;   // x noise_floor at severity 1
constexpr double kLoosenessPeakGain = 150.0;
constexpr double kCableBiasGain = 600.0;
constexpr double kCableBiasDecayBins = 32.0;
constexpr double kSensorBiasGain = 800.0;
constexpr double kSensorBiasDecayBins = 2.0;
constexpr double kSensorFloorScale = 0.5;
constexpr double kFloorBase = 0.5;
constexpr double kFloorLiftHz = 50.0;
constexpr double kLowSeverity = 0.6;
constexpr double kModerateSeverity = 0.8;
constexpr double kWorsenedSeverity = 0.7;
constexpr double kSpeedJitter = 0.06;
constexpr EpochSeconds kCorpusEpoch = 1609459200;  // 2021-01-01T00:00:00Z

double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

void add_peak(std::vector<double>& spectrum, double freq_hz, double amplitude) {
    const double centre = freq_hz / kBinWidthHz;
    const double reach = 5.0 * kPeakSigmaBins;
    const auto lo = static_cast<std::ptrdiff_t>(std::max(0.0, std::ceil(centre - reach)));
    const auto hi = static_cast<std::ptrdiff_t>(
        std::min(static_cast<double>(kSpectrumBins - 1), std::floor(centre + reach)));
    for (std::ptrdiff_t k = lo; k <= hi; ++k) {
        const double d = (static_cast<double>(k) - centre) / kPeakSigmaBins;
        spectrum[static_cast<std::size_t>(k)] += amplitude * std::exp(-0.5 * d * d);
    }
}

void add_harmonics(std::vector<double>& spectrum, double fundamental_hz, int count, double amplitude,
                   double decay, const char* what) {
    if (!(fundamental_hz < kSpectrumMaxHz)) {
        std::ostringstream msg;
        msg << what << " frequency " << fundamental_hz << " Hz has no harmonic below " << kSpectrumMaxHz << " Hz";
        throw GenerationError(msg.str());
    }
    double a = amplitude;
    for (int h = 1; h <= count; ++h) {
        const double f = fundamental_hz * h;
        if (f >= kSpectrumMaxHz) break;
        add_peak(spectrum, f, a);
        a *= decay;
    }
}

// Low-frequency bias: exponential decay from DC over `decay_bins` bins.
void add_bias(std::vector<double>& spectrum, double amplitude, double decay_bins) {
    for (std::size_t k = 0; k < spectrum.size(); ++k) {
        const double v = amplitude * std::exp(-static_cast<double>(k) / decay_bins);
        if (v < 1e-300) break;
        spectrum[k] += v;
    }
}

// Rounds to a power-of-ten grid two decades finer than ~1e-4 of the noise
// floor so corpus files stay compact. Values keep full precision in memory.
void quantize(std::vector<double>& spectrum, double noise_floor) {
    const int exponent = static_cast<int>(std::floor(std::log10(noise_floor))) - 4;
    if (exponent >= 0 || exponent < -300) return;
    const double scale = std::pow(10.0, -exponent);
    if (!std::isfinite(scale)) return;
    for (double& v : spectrum) v = std::round(v * scale) / scale;
}

// --- annotation templates --------------------------------------------------
// "{s}" is replaced by the severity word.

struct Templates {
    std::vector<std::string_view> detected;
    std::vector<std::string_view> worsened;
    std::vector<std::string_view> replaced;
};

const Templates& templates_for(FaultClass cls) {
    static const std::array<Templates, 6> table = {{
        // Healthy
        {{"Normal condition, no action", "Checked, nothing found", "Normal condition after inspection"},
         {"Normal condition, no action", "Checked again, nothing found"},
         {"Normal condition after service"}},
        // BPFO
        {{"BPFO Env {s}", "BPFO in env {s} levels keep watch", "BPFO indication {s}, keep watch"},
         {"BPFO visible in mm/s as overtones, WO written on BPFO", "BPFO levels {s} and increasing, WO written"},
         {"Bearing replaced, levels of BPFO low again"}},
        // BPFI
        {{"BPFI Env {s}", "BPFI inner race {s} levels keep watch"},
         {"BPFI {s} with sidebands, WO written on BPFI"},
         {"Bearing replaced, BPFI gone"}},
        // CableFault
        {{"Check cable, cable damaged", "Cable connection loose, check cable"},
         {"WO written cable replacement", "WO cable replacement, cable damaged"},
         {"Cable changed, signal OK"}},
        // SensorFault
        {{"Replace the sensor next stop", "Sensor drifting, replace sensor"},
         {"Replace sensor, sensor erratic", "Sensor erratic, replace the sensor next stop"},
         {"Sensor swapped, readings normal"}},
        // Looseness
        {{"Looseness {s}, check bolts", "Running speed harmonics, looseness {s}"},
         {"Looseness {s} and increasing, WO written on bolts"},
         {"Bolts tightened, looseness gone"}},
    }};
    return table[static_cast<std::size_t>(cls)];
}

std::string render(std::string_view tmpl, std::string_view severity) {
    std::string out(tmpl);
    const auto pos = out.find("{s}");
    if (pos != std::string::npos) out.replace(pos, 3, severity);
    return out;
}

FaultClass draw_class(const std::map<FaultClass, double>& dist, double u) {
    double acc = 0.0;
    FaultClass last = FaultClass::Healthy;
    for (FaultClass c : kAllFaultClasses) {
        const auto it = dist.find(c);
        if (it == dist.end() || it->second <= 0.0) continue;
        acc += it->second;
        last = c;
        if (u < acc) return c;
    }
    return last;
}

}  // namespace

BearingFrequencies bearing_frequencies(const BearingGeometry& geom, double shaft_hz) {
    if (!(shaft_hz > 0.0) || !std::isfinite(shaft_hz)) throw ParameterError("shaft_hz must be positive");
    if (geom.n_rolling_elements < 1) throw ParameterError("n_rolling_elements must be positive");
    if (!(geom.ball_diameter_ratio > 0.0 && geom.ball_diameter_ratio < 1.0)) {
        throw ParameterError("ball_diameter_ratio must lie in (0,1)");
    }
    if (!(geom.contact_angle_rad >= 0.0 && geom.contact_angle_rad < std::numbers::pi / 2)) {
        throw ParameterError("contact_angle_rad must lie in [0, pi/2)");
    }
    const double half_n_fr = 0.5 * geom.n_rolling_elements * shaft_hz;
    const double ratio = geom.ball_diameter_ratio * std::cos(geom.contact_angle_rad);
    return {half_n_fr * (1.0 - ratio), half_n_fr * (1.0 + ratio)};
}

std::vector<double> gen_spectrum(FaultClass cls, double severity, double shaft_hz, const BearingGeometry& geom,
                                 double noise_floor, std::uint64_t seed) {
    if (!(severity >= 0.0 && severity <= 1.0)) throw ParameterError("severity must lie in [0,1]");
    if (!(noise_floor > 0.0) || !std::isfinite(noise_floor)) throw ParameterError("noise_floor must be positive");

    // A faulty sensor reads low across the band apart from its bias.
    const double floor_scale = cls == FaultClass::SensorFault ? kSensorFloorScale : 1.0;

    Rng rng = make_rng(seed, {0x5bec7u});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> spectrum(kSpectrumBins);
    for (std::size_t k = 0; k < kSpectrumBins; ++k) {
        const double f = static_cast<double>(k) * kBinWidthHz;
        // Floor rises toward DC; peaks at 2.25 * noise_floor when unscaled.
        spectrum[k] = noise_floor * floor_scale * (0.5 + unit(rng)) * (kFloorBase + std::exp(-f / kFloorLiftHz));
    }

    switch (cls) {
        case FaultClass::Healthy:
            break;
        case FaultClass::BPFO:
            add_harmonics(spectrum, bearing_frequencies(geom, shaft_hz).bpfo_hz, kBearingHarmonics,
                          severity * kBearingPeakGain * noise_floor, 1.0, "BPFO");
            break;
        case FaultClass::BPFI:
            add_harmonics(spectrum, bearing_frequencies(geom, shaft_hz).bpfi_hz, kBearingHarmonics,
                          severity * kBearingPeakGain * noise_floor, 1.0, "BPFI");
            break;
        case FaultClass::Looseness:
            add_harmonics(spectrum, shaft_hz, kLoosenessHarmonics, severity * kLoosenessPeakGain * noise_floor,
                          0.85, "shaft");
            break;
        case FaultClass::CableFault:
            add_bias(spectrum, severity * kCableBiasGain * noise_floor, kCableBiasDecayBins);
            break;
        case FaultClass::SensorFault:
            add_bias(spectrum, severity * kSensorBiasGain * noise_floor, kSensorBiasDecayBins);
            break;
    }
    quantize(spectrum, noise_floor);
    return spectrum;
}

std::string_view severity_word(double severity) {
    if (severity < kLowSeverity) return "low";
    if (severity < kModerateSeverity) return "moderate";
    return "high";
}

std::string gen_annotation(FaultClass cls, double severity, Stage stage, std::uint64_t seed) {
    const Templates& t = templates_for(cls);
    const auto& family = stage == Stage::Detected ? t.detected : stage == Stage::Worsened ? t.worsened : t.replaced;
    Rng rng = make_rng(seed, {0xa770u});
    const auto pick = std::uniform_int_distribution<std::size_t>(0, family.size() - 1)(rng);
    return render(family[pick], severity_word(severity));
}

GeneratorConfig GeneratorConfig::defaults() {
    GeneratorConfig c;
    c.classes_distribution = {{FaultClass::Healthy, 0.2},
                              {FaultClass::BPFO, 0.2},
                              {FaultClass::CableFault, 0.2},
                              {FaultClass::SensorFault, 0.2},
                              {FaultClass::Looseness, 0.2}};
    return c;
}

void GeneratorConfig::validate() const {
    if (n_assets < 1) throw ConfigError("n_assets must be positive");
    if (classes_distribution.empty()) throw ConfigError("classes_distribution is empty");
    double sum = 0.0;
    for (const auto& [cls, w] : classes_distribution) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw ConfigError("class weight for " + std::string(to_string(cls)) + " must be non-negative");
        }
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("class weights must sum to 1 (got " + std::to_string(sum) + ")");
    if (!(rpm_low > 0.0) || !(rpm_low < rpm_high) || !std::isfinite(rpm_high)) {
        throw ConfigError("rpm_range must satisfy 0 < low < high");
    }
    if (recordings_per_annotation < 1) throw ConfigError("recordings_per_annotation must be positive");
    if (window_days < 1) throw ConfigError("window_days must be positive");
    if (!(noise_floor > 0.0) || !std::isfinite(noise_floor)) throw ConfigError("noise_floor must be positive");
    for (const double r : {corruption.incomplete_rate, corruption.inexact_rate, corruption.inaccurate_rate,
                           replaced_rate}) {
        if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("corruption rates must lie in [0,1]");
    }
}

CorpusDatabase gen_corpus(const GeneratorConfig& config) {
    config.validate();

    std::vector<FaultClass> present;
    for (FaultClass c : kAllFaultClasses) {
        const auto it = config.classes_distribution.find(c);
        if (it != config.classes_distribution.end() && it->second > 0.0) present.push_back(c);
    }

    CorpusDatabase db;
    const EpochSeconds window = static_cast<EpochSeconds>(config.window_days) * kSecondsPerDay;
    char buf[64];

    for (int a = 0; a < config.n_assets; ++a) {
        // Every random draw happens unconditionally and in a fixed order so the
        // corpus structure does not shift when a corruption rate changes.
        Rng rng = make_rng(config.seed, {0xa55e7u, static_cast<std::uint64_t>(a)});
        std::snprintf(buf, sizeof buf, "asset-%03d", a);
        const std::string asset_id = buf;

        FaultClass cls = draw_class(config.classes_distribution, uniform(rng, 0.0, 1.0));
        const double severity = cls == FaultClass::Healthy ? 0.0 : uniform(rng, 0.4, 1.0);
        BearingGeometry geom;
        geom.n_rolling_elements = std::uniform_int_distribution<int>(9, 10)(rng);
        geom.ball_diameter_ratio = uniform(rng, 0.18, 0.24);
        geom.contact_angle_rad = uniform(rng, 0.0, 0.35);
        const double shaft_hz = uniform(rng, config.rpm_low, config.rpm_high) / 60.0;
        const int n_subassets = std::uniform_int_distribution<int>(1, 3)(rng);
        const EpochSeconds date = kCorpusEpoch + std::uniform_int_distribution<EpochSeconds>(0, 700)(rng) * kSecondsPerDay +
                                  std::uniform_int_distribution<EpochSeconds>(6, 18)(rng) * 3600;
        const bool drop_annotation = uniform(rng, 0.0, 1.0) < config.corruption.incomplete_rate;
        const bool mislabel = uniform(rng, 0.0, 1.0) < config.corruption.inaccurate_rate;
        const bool replaced = cls != FaultClass::Healthy && uniform(rng, 0.0, 1.0) < config.replaced_rate;
        const double other_u = uniform(rng, 0.0, 1.0);
        const std::uint64_t text_seed = rng();

        auto& subs = db.assets[asset_id];
        for (int s = 1; s <= n_subassets; ++s) subs.push_back(asset_id + "-s" + std::to_string(s));

        std::vector<EpochSeconds> times(static_cast<std::size_t>(config.recordings_per_annotation));
        for (auto& t : times) t = date + std::uniform_int_distribution<EpochSeconds>(-window, window)(rng);
        std::sort(times.begin(), times.end());

        for (std::size_t r = 0; r < times.size(); ++r) {
            Recording rec;
            std::snprintf(buf, sizeof buf, "%s-r%04zu", asset_id.c_str(), r);
            rec.recording_id = buf;
            rec.asset_id = asset_id;
            rec.subasset_id = subs[std::uniform_int_distribution<std::size_t>(0, subs.size() - 1)(rng)];
            rec.timestamp = times[r];
            rec.sample_rate_hz = 2.0 * kSpectrumMaxHz;
            const double speed = shaft_hz * uniform(rng, 1.0 - kSpeedJitter, 1.0 + kSpeedJitter);
            const double rec_severity = severity * uniform(rng, 0.85, 1.0);
            const bool inexact = uniform(rng, 0.0, 1.0) < config.corruption.inexact_rate;
            const std::uint64_t spectrum_seed = rng();

            FaultClass truth = cls;
            if (cls != FaultClass::Healthy && (inexact || (replaced && rec.timestamp > date))) {
                truth = FaultClass::Healthy;
            }
            const double truth_severity = truth == FaultClass::Healthy ? 0.0 : rec_severity;
            rec.spectrum = gen_spectrum(truth, truth_severity, speed, geom, config.noise_floor, spectrum_seed);
            rec.truth_class = truth;
            rec.truth_severity = truth_severity;
            db.recordings.push_back(std::move(rec));
        }

        if (drop_annotation) continue;
        FaultClass text_class = cls;
        if (mislabel && present.size() > 1) {
            std::vector<FaultClass> others;
            for (FaultClass c : present) if (c != cls) others.push_back(c);
            text_class = others[std::min(others.size() - 1, static_cast<std::size_t>(other_u * others.size()))];
        }
        const Stage stage = replaced ? Stage::Replaced : severity < kWorsenedSeverity ? Stage::Detected : Stage::Worsened;
        std::snprintf(buf, sizeof buf, "ann-%03d", a);
        db.annotations.push_back({buf, asset_id, date, gen_annotation(text_class, severity, stage, text_seed)});
    }
    return db;
}

// ---------------------------------------------------------------------------
// Config file

namespace {
constexpr const char* kConfigFormat = "tlsfd-config";
constexpr int kConfigVersion = 1;
}  // namespace

void save_generator_config(const GeneratorConfig& c, const std::filesystem::path& path) {
    using jsonl::json;
    json dist = json::object();
    for (const auto& [cls, w] : c.classes_distribution) dist[std::string(to_string(cls))] = w;
    auto out = jsonl::open_for_write(path);
    jsonl::write_line(out, {{"format", kConfigFormat}, {"version", kConfigVersion}});
    jsonl::write_line(out, {{"kind", "config"},
                            {"n_assets", c.n_assets},
                            {"classes_distribution", dist},
                            {"rpm_range", {c.rpm_low, c.rpm_high}},
                            {"recordings_per_annotation", c.recordings_per_annotation},
                            {"window_days", c.window_days},
                            {"noise_floor", c.noise_floor},
                            {"corruption",
                             {{"incomplete_rate", c.corruption.incomplete_rate},
                              {"inexact_rate", c.corruption.inexact_rate},
                              {"inaccurate_rate", c.corruption.inaccurate_rate}}},
                            {"replaced_rate", c.replaced_rate},
                            {"seed", c.seed}});
}

GeneratorConfig load_generator_config(const std::filesystem::path& path) {
    using jsonl::json;
    GeneratorConfig c = GeneratorConfig::defaults();
    bool found = false;
    jsonl::read_file(path, kConfigFormat, kConfigVersion, [&](const json& rec, std::size_t line) {
        if (jsonl::require_string(rec, "kind", line) != "config") {
            throw ParseError(line, "expected a record of kind \"config\"");
        }
        if (found) throw ParseError(line, "more than one config record");
        found = true;
        try {
            c.n_assets = rec.value("n_assets", c.n_assets);
            if (const auto it = rec.find("classes_distribution"); it != rec.end()) {
                c.classes_distribution.clear();
                for (const auto& [name, w] : it->items()) {
                    const auto cls = parse_fault_class(name);
                    if (!cls) throw ParseError(line, "unknown fault class '" + name + "'");
                    c.classes_distribution[*cls] = w.get<double>();
                }
            }
            if (const auto it = rec.find("rpm_range"); it != rec.end()) {
                if (!it->is_array() || it->size() != 2) throw ParseError(line, "rpm_range must be [low, high]");
                c.rpm_low = (*it)[0].get<double>();
                c.rpm_high = (*it)[1].get<double>();
            }
            c.recordings_per_annotation = rec.value("recordings_per_annotation", c.recordings_per_annotation);
            c.window_days = rec.value("window_days", c.window_days);
            c.noise_floor = rec.value("noise_floor", c.noise_floor);
            if (const auto it = rec.find("corruption"); it != rec.end()) {
                c.corruption.incomplete_rate = it->value("incomplete_rate", 0.0);
                c.corruption.inexact_rate = it->value("inexact_rate", 0.0);
                c.corruption.inaccurate_rate = it->value("inaccurate_rate", 0.0);
            }
            c.replaced_rate = rec.value("replaced_rate", c.replaced_rate);
            c.seed = rec.value("seed", c.seed);
        } catch (const json::exception& e) {
            throw ParseError(line, e.what());
        }
    });
    if (!found) throw ParseError(1, "config file has no config record");
    c.validate();
    return c;
}

}  // namespace tlsfd
