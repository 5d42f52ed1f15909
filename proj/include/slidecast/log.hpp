#pragma once

// Structured JSON-lines logging. Default sink is stderr; tests swap in a capture.

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

namespace slidecast::log {

using Sink = std::function<void(const nlohmann::json&)>;

namespace detail {
inline std::mutex& mutex() {
    static std::mutex m;
    return m;
}
inline Sink& sink() {
    static Sink s = [](const nlohmann::json& j) { std::cerr << j.dump() << '\n'; };
    return s;
}
}  // namespace detail

/// Replaces the sink and returns the previous one.
inline Sink set_sink(Sink s) {
    std::lock_guard lock(detail::mutex());
    return std::exchange(detail::sink(), std::move(s));
}

inline void emit(const std::string& level, const std::string& stage, const std::string& message,
                 nlohmann::json fields = nlohmann::json::object()) {
    fields["level"] = level;
    fields["stage"] = stage;
    fields["msg"] = message;
    std::lock_guard lock(detail::mutex());
    if (detail::sink()) detail::sink()(fields);
}

inline void info(const std::string& stage, const std::string& message, nlohmann::json fields = nlohmann::json::object()) {
    emit("info", stage, message, std::move(fields));
}
inline void warn(const std::string& stage, const std::string& message, nlohmann::json fields = nlohmann::json::object()) {
    emit("warn", stage, message, std::move(fields));
}
inline void error(const std::string& stage, const std::string& message, nlohmann::json fields = nlohmann::json::object()) {
    emit("error", stage, message, std::move(fields));
}

/// RAII sink swap for tests.
class ScopedSink {
public:
    explicit ScopedSink(Sink s) : previous_(set_sink(std::move(s))) {}
    ~ScopedSink() { set_sink(std::move(previous_)); }
    ScopedSink(const ScopedSink&) = delete;
    ScopedSink& operator=(const ScopedSink&) = delete;

private:
    Sink previous_;
};

}  // namespace slidecast::log
