#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tlsfd/corpus.hpp"
#include "tlsfd/fault_class.hpp"

namespace tlsfd {

struct BearingGeometry {
    int n_rolling_elements = 10;
    double ball_diameter_ratio = 0.2;  // d/D
    double contact_angle_rad = 0.0;
};

struct BearingFrequencies {
    double bpfo_hz = 0.0;
    double bpfi_hz = 0.0;
};

/// Outer/inner race ball-pass frequencies for a shaft turning at `shaft_hz`.
BearingFrequencies bearing_frequencies(const BearingGeometry& geom, double shaft_hz);

enum class Stage { Detected, Worsened, Replaced };

/// Per-annotation weak-supervision noise rates.
struct CorruptionRates {
    double incomplete_rate = 0.0;  // annotation dropped, faulty recordings kept
    double inexact_rate = 0.0;     // healthy recordings mixed into a faulty asset's window
    double inaccurate_rate = 0.0;  // annotation written for the wrong class
};

struct GeneratorConfig {
    int n_assets = 60;
    std::map<FaultClass, double> classes_distribution;
    double rpm_low = 1400.0;
    double rpm_high = 1600.0;
    int recordings_per_annotation = 50;
    int window_days = kDefaultWindowDays;
    double noise_floor = 0.02;
    CorruptionRates corruption;
    // Fraction of faulty assets whose annotation reports the part replaced;
    // recordings after the annotation date are then healthy but still paired.
    double replaced_rate = 0.0;
    std::uint64_t seed = 1;

    /// 60 assets split evenly over Healthy, BPFO, CableFault, SensorFault
    /// and Looseness, 50 recordings per annotation, no corruption.
    static GeneratorConfig defaults();

    /// Throws ConfigError on any invariant violation.
    void validate() const;
};

/// 3200-bin amplitude spectrum over 0-500 Hz with the class's fault signature.
std::vector<double> gen_spectrum(FaultClass cls, double severity, double shaft_hz, const BearingGeometry& geom,
                                 double noise_floor, std::uint64_t seed);

/// Analyst-style annotation text for a fault at a given stage.
std::string gen_annotation(FaultClass cls, double severity, Stage stage, std::uint64_t seed);

/// Word used for a severity value in annotation text ("low", "moderate", "high").
std::string_view severity_word(double severity);

CorpusDatabase gen_corpus(const GeneratorConfig& config);

void save_generator_config(const GeneratorConfig& config, const std::filesystem::path& path);
GeneratorConfig load_generator_config(const std::filesystem::path& path);

}  // namespace tlsfd
