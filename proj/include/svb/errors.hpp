#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace svb {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Index or shape outside the bounds a container was built with.
class DimensionError : public Error {
public:
    DimensionError(std::string what, std::uint64_t index, std::uint64_t bound)
        : Error(std::move(what)), index_(index), bound_(bound) {}
    std::uint64_t index() const noexcept { return index_; }
    std::uint64_t bound() const noexcept { return bound_; }

private:
    std::uint64_t index_;
    std::uint64_t bound_;
};

class NumericError : public Error {
public:
    using Error::Error;
};

// Text-format ingestion failure; line is 1-based, 0 when not line-specific.
class ParseError : public Error {
public:
    ParseError(std::string what, std::size_t line = 0)
        : Error(std::move(what)), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

enum class WireFault : std::uint8_t {
    bad_magic,
    bad_version,
    bad_kind,
    truncated,
    trailing_bytes,
    unsorted_indices,
    index_out_of_range,
    bad_flag,
    too_long,
};

class WireError : public Error {
public:
    WireError(WireFault fault, std::string what, std::size_t offset = 0)
        : Error(std::move(what)), fault_(fault), offset_(offset) {}
    WireFault fault() const noexcept { return fault_; }
    std::size_t offset() const noexcept { return offset_; }

private:
    WireFault fault_;
    std::size_t offset_;
};

class TransportError : public Error {
public:
    explicit TransportError(std::string what, std::uint16_t peer = 0xffff)
        : Error(std::move(what)), peer_(peer) {}
    std::uint16_t peer() const noexcept { return peer_; }

private:
    std::uint16_t peer_;
};

// Same (sender, clock) applied twice to one replica.
class DuplicateUpdateError : public Error {
public:
    DuplicateUpdateError(std::string what, std::uint16_t sender, std::uint64_t clock)
        : Error(std::move(what)), sender_(sender), clock_(clock) {}
    std::uint16_t sender() const noexcept { return sender_; }
    std::uint64_t clock() const noexcept { return clock_; }

private:
    std::uint16_t sender_;
    std::uint64_t clock_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace svb
