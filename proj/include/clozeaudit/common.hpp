#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace clozeaudit {

using TokenId = std::uint32_t;

/// Reserved vocabulary ids. Corpus tokens start at kFirstRegularId.
inline constexpr TokenId kMaskId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kBosId = 2;
inline constexpr TokenId kEosId = 3;
inline constexpr TokenId kFirstRegularId = 4;

/// Error raised by every module; `what()` is the human-readable message and
/// `code()` a short machine-readable tag used in the CLI's error JSON.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}
    explicit Error(const std::string& message) : Error("error", message) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

/// Child seed derived from a master seed and a label. Pure function; used so
/// that every random stream in the pipeline is reproducible from one seed.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// Neumaier (improved Kahan) compensated summation.
class CompensatedSum {
public:
    void add(double x) noexcept;
    double value() const noexcept { return sum_ + compensation_; }
    std::size_t count() const noexcept { return count_; }
    double mean() const noexcept { return count_ ? value() / static_cast<double>(count_) : 0.0; }

private:
    double sum_ = 0.0;
    double compensation_ = 0.0;
    std::size_t count_ = 0;
};

double compensated_mean(std::span<const double> values);

// Little-endian binary helpers shared by the checkpoint writers.
namespace binio {
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, float v);
void write_f64(std::ostream& out, double v);
void write_bytes(std::ostream& out, std::string_view bytes);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
float read_f32(std::istream& in);
double read_f64(std::istream& in);
std::string read_bytes(std::istream& in, std::size_t n);
} // namespace binio

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

/// Quote a CSV field when it contains a separator, quote or newline.
std::string csv_field(std::string_view field);
/// Shortest round-trippable decimal form of a double.
std::string format_double(double value);

} // namespace clozeaudit
