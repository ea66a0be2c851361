#include "tip/log.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <mutex>

#include "json.hpp"

namespace tip::log {

namespace {

std::atomic<int> g_level{static_cast<int>(Level::Warn)};
std::mutex g_mu;
std::function<void(const std::string&)> g_sink;

const char* level_name(Level l) {
    switch (l) {
        case Level::Trace: return "trace";
        case Level::Debug: return "debug";
        case Level::Info: return "info";
        case Level::Warn: return "warn";
        case Level::Error: return "error";
        case Level::Off: return "off";
    }
    return "?";
}

}  // namespace

Level level() { return static_cast<Level>(g_level.load()); }
void set_level(Level l) { g_level.store(static_cast<int>(l)); }

bool parse_level(std::string_view name, Level& out) {
    for (int i = 0; i <= static_cast<int>(Level::Off); ++i) {
        if (name == level_name(static_cast<Level>(i))) {
            out = static_cast<Level>(i);
            return true;
        }
    }
    return false;
}

bool init_from_env() {
    const char* v = std::getenv("TIP_LOG");
    if (!v || !*v) return true;
    Level l;
    if (!parse_level(v, l)) return false;
    set_level(l);
    return true;
}

void set_sink(std::function<void(const std::string&)> sink) {
    std::lock_guard lock(g_mu);
    g_sink = std::move(sink);
}

std::string format(Level l, std::string_view event, std::initializer_list<Field> fields) {
    nlohmann::ordered_json j;
    j["ts"] = std::chrono::duration_cast<std::chrono::microseconds>(
                  std::chrono::system_clock::now().time_since_epoch())
                  .count();
    j["level"] = level_name(l);
    j["event"] = std::string(event);
    for (const auto& [k, v] : fields) std::visit([&, key = std::string(k)](const auto& x) { j[key] = x; }, v);
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

void write(Level l, std::string_view event, std::initializer_list<Field> fields) {
    std::string line = format(l, event, fields);
    std::lock_guard lock(g_mu);
    if (g_sink)
        g_sink(line);
    else
        std::cerr << line << '\n';
}

}  // namespace tip::log
