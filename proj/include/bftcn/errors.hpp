#pragma once

#include <stdexcept>
#include <string>

namespace bftcn {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Matrix or tensor dimensions disagree with what an operation expects.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation (empty sequence, negative delay, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Layer index outside the bounds of its stage.
class AddressError : public Error {
public:
    using Error::Error;
};

/// NaN or infinity where a finite value is required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// The future-window probe could not bound the window within the given horizon.
class InconclusiveMeasurement : public Error {
public:
    using Error::Error;
};

/// Misuse of a stream (push after close, double close, wrong frame width).
class StreamError : public Error {
public:
    using Error::Error;
};

/// Semantically invalid input data (segment gaps, unknown labels, bad manifests).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// I/O failure; the message always names the file.
class IoError : public Error {
public:
    using Error::Error;
};

// Binary format errors. Each failure mode has its own type so callers can tell them apart.
class FormatError : public Error {
public:
    using Error::Error;
};

class BadMagicError : public FormatError {
public:
    using FormatError::FormatError;
};

class TruncatedFileError : public FormatError {
public:
    using FormatError::FormatError;
};

class VersionMismatchError : public FormatError {
public:
    using FormatError::FormatError;
};

class ChecksumError : public FormatError {
public:
    using FormatError::FormatError;
};

}  // namespace bftcn
