#pragma once

// Structured JSON-lines logging to stderr. Level comes from TIP_LOG
// (trace|debug|info|warn|error|off, default warn).

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

namespace tip::log {

enum class Level { Trace = 0, Debug, Info, Warn, Error, Off };

using FieldValue = std::variant<std::string, std::int64_t, std::uint64_t, double, bool>;
using Field = std::pair<std::string_view, FieldValue>;

Level level();
void set_level(Level l);
/// False on an unknown name.
bool parse_level(std::string_view name, Level& out);
/// Reads TIP_LOG; unknown values leave the level unchanged and return false.
bool init_from_env();

/// Replaces the stderr writer; an empty function restores it.
void set_sink(std::function<void(const std::string& line)> sink);

inline bool enabled(Level l) { return l >= level() && level() != Level::Off; }

/// One JSON object per line: {"ts":<epoch µs>,"level":..,"event":..,<fields>}.
std::string format(Level l, std::string_view event, std::initializer_list<Field> fields);
void write(Level l, std::string_view event, std::initializer_list<Field> fields = {});

inline void debug(std::string_view event, std::initializer_list<Field> fields = {}) {
    if (enabled(Level::Debug)) write(Level::Debug, event, fields);
}
inline void info(std::string_view event, std::initializer_list<Field> fields = {}) {
    if (enabled(Level::Info)) write(Level::Info, event, fields);
}
inline void warn(std::string_view event, std::initializer_list<Field> fields = {}) {
    if (enabled(Level::Warn)) write(Level::Warn, event, fields);
}
inline void error(std::string_view event, std::initializer_list<Field> fields = {}) {
    if (enabled(Level::Error)) write(Level::Error, event, fields);
}

}  // namespace tip::log
