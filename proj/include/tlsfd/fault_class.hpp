#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace tlsfd {

enum class FaultClass { Healthy, BPFO, BPFI, CableFault, SensorFault, Looseness };

inline constexpr std::array<FaultClass, 6> kAllFaultClasses = {
    FaultClass::Healthy,    FaultClass::BPFO,        FaultClass::BPFI,
    FaultClass::CableFault, FaultClass::SensorFault, FaultClass::Looseness};

std::string_view to_string(FaultClass c);
std::optional<FaultClass> parse_fault_class(std::string_view name);

}  // namespace tlsfd
