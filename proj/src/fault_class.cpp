#include "tlsfd/fault_class.hpp"

namespace tlsfd {

std::string_view to_string(FaultClass c) {
    switch (c) {
        case FaultClass::Healthy: return "Healthy";
        case FaultClass::BPFO: return "BPFO";
        case FaultClass::BPFI: return "BPFI";
        case FaultClass::CableFault: return "CableFault";
        case FaultClass::SensorFault: return "SensorFault";
        case FaultClass::Looseness: return "Looseness";
    }
    return "Unknown";
}

std::optional<FaultClass> parse_fault_class(std::string_view name) {
    for (FaultClass c : kAllFaultClasses) {
        if (to_string(c) == name) return c;
    }
    return std::nullopt;
}

}  // namespace tlsfd
