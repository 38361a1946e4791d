#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace fedcaug {

// Base class for every error this library raises.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor / image dimension disagreement. Carries both sides of the mismatch.
class ShapeError : public Error {
public:
    ShapeError(std::string context, std::string expected, std::string actual)
        : Error(context + ": expected shape " + expected + ", got " + actual),
          expected_(std::move(expected)),
          actual_(std::move(actual)) {}

    const std::string& expected() const noexcept { return expected_; }
    const std::string& actual() const noexcept { return actual_; }

private:
    std::string expected_;
    std::string actual_;
};

// Invalid argument value: thresholds out of order, empty inputs, bad ranges.
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Malformed file content. `offset` is the byte position where parsing stopped.
class FormatError : public Error {
public:
    FormatError(const std::string& msg, std::size_t offset)
        : Error(msg + " (byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

// Experiment configuration problem; names the offending field.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& msg)
        : Error("config field '" + field + "': " + msg), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// Non-finite value detected during training; names the tensor and the step.
class NumericError : public Error {
public:
    NumericError(std::string layer, std::string step)
        : Error("non-finite value in '" + layer + "' during " + step),
          layer_(std::move(layer)),
          step_(std::move(step)) {}

    const std::string& layer() const noexcept { return layer_; }
    const std::string& step() const noexcept { return step_; }

private:
    std::string layer_;
    std::string step_;
};

}  // namespace fedcaug
