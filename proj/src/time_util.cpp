#include "tlsfd/time_util.hpp"

#include <chrono>
#include <cstdio>

#include "tlsfd/errors.hpp"

namespace tlsfd {

std::string format_utc(EpochSeconds t) {
    using namespace std::chrono;
    const sys_seconds tp{seconds{t}};
    const auto day = floor<days>(tp);
    const year_month_day ymd{day};
    const hh_mm_ss hms{tp - day};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

EpochSeconds parse_utc(std::string_view text) {
    using namespace std::chrono;
    const std::string s(text);
    int y = 0;
    unsigned mo = 0, d = 0, hh = 0, mm = 0, ss = 0;
    int consumed = 0;
    const int n = std::sscanf(s.c_str(), "%4d-%2u-%2uT%2u:%2u:%2u%n", &y, &mo, &d, &hh, &mm, &ss,
                              &consumed);
    if (n != 6) throw ValidationError("invalid UTC timestamp '" + s + "'");
    const std::string_view rest = std::string_view(s).substr(static_cast<std::size_t>(consumed));
    if (rest != "Z" && rest != "+00:00") {
        throw ValidationError("timestamp '" + s + "' is not UTC (expected trailing Z)");
    }
    const year_month_day ymd{year{y}, month{mo}, day{d}};
    if (!ymd.ok() || hh > 23 || mm > 59 || ss > 59) {
        throw ValidationError("invalid UTC timestamp '" + s + "'");
    }
    const sys_seconds tp = sys_days{ymd} + hours{hh} + minutes{mm} + seconds{ss};
    return tp.time_since_epoch().count();
}

}  // namespace tlsfd
