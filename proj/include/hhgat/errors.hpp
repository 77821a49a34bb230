#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hhgat {

/// Shape or wiring mistakes made by the caller (dimension mismatch, foreign tape, ...).
class StructuralError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Ingestion failure. Carries the offending file and 1-based line (0 when not line-specific).
class DataError : public std::runtime_error {
public:
    DataError(std::string file, std::size_t line, const std::string& what)
        : std::runtime_error(format(file, line, what)), file_(std::move(file)), line_(line) {}

    explicit DataError(const std::string& what) : std::runtime_error(what) {}

    const std::string& file() const noexcept { return file_; }
    std::size_t line() const noexcept { return line_; }

private:
    static std::string format(const std::string& file, std::size_t line, const std::string& what) {
        std::string out = file;
        if (line > 0) out += ":" + std::to_string(line);
        return out + ": " + what;
    }

    std::string file_;
    std::size_t line_ = 0;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace hhgat
