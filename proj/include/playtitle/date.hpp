#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace playtitle {

// Calendar date at day resolution (UTC).
class Date {
public:
    Date() = default;
    explicit Date(std::chrono::sys_days days) : days_(days) {}
    Date(int year, unsigned month, unsigned day);

    // Parses "YYYY-MM-DD"; anything after the first 10 characters must be a
    // time-of-day suffix (space or 'T'), which is ignored.
    static Date parse(std::string_view text);
    static Date from_epoch_seconds(std::int64_t seconds);

    std::chrono::sys_days days() const { return days_; }
    std::int64_t days_since_epoch() const { return days_.time_since_epoch().count(); }
    std::string to_string() const;

    auto operator<=>(const Date&) const = default;

private:
    std::chrono::sys_days days_{};
};

}  // namespace playtitle
