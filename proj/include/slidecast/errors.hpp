#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace slidecast {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition (empty input, undecodable image, ...).
class PreconditionError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// transcript

class TranscriptError : public Error {
public:
    TranscriptError(const std::string& what, std::size_t offset)
        : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class UnbalancedMarker : public TranscriptError {
public:
    explicit UnbalancedMarker(std::size_t offset)
        : TranscriptError("unbalanced highlight marker", offset) {}
};

class NestedMarker : public TranscriptError {
public:
    explicit NestedMarker(std::size_t offset)
        : TranscriptError("nested highlight marker", offset) {}
};

class EmptyMarker : public TranscriptError {
public:
    explicit EmptyMarker(std::size_t offset)
        : TranscriptError("highlight marker without words", offset) {}
};

// ocr ingest

class ParseError : public Error {
public:
    using Error::Error;
};

class GeometryError : public Error {
public:
    using Error::Error;
};

// providers / matcher

class ProviderError : public Error {
public:
    using Error::Error;
};

class MalformedReply : public Error {
public:
    using Error::Error;
};

class PersistentlyMalformed : public Error {
public:
    using Error::Error;
};

// timing

class OccurrenceNotFound : public Error {
public:
    using Error::Error;
};

// evalkit

class SchemaError : public Error {
public:
    using Error::Error;
};

class DanglingId : public Error {
public:
    using Error::Error;
};

// costmodel

class ZeroTotal : public Error {
public:
    ZeroTotal() : Error("cost breakdown requested for a zero total") {}
};

// renderer

class EncoderMissing : public Error {
public:
    using Error::Error;
};

class EncoderFailed : public Error {
public:
    EncoderFailed(const std::string& what, std::string stderr_text)
        : Error(what), stderr_(std::move(stderr_text)) {}
    const std::string& stderr_text() const noexcept { return stderr_; }

private:
    std::string stderr_;
};

}  // namespace slidecast
