#pragma once

#include <stdexcept>
#include <string>

namespace vlcabs {

// Root of the library error hierarchy. Two branches matter to callers:
// DataError (bad files, bad ids, bad shapes) and NumericError (values the
// math cannot proceed with). The CLI maps them to distinct exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

// --- data errors ---

class IoError : public DataError {
public:
    using DataError::DataError;
};

class BadMagicError : public DataError {
public:
    using DataError::DataError;
};

class VersionUnsupportedError : public DataError {
public:
    using DataError::DataError;
};

class TruncatedFileError : public DataError {
public:
    using DataError::DataError;
};

class CorruptDataError : public DataError {
public:
    using DataError::DataError;
};

class UnknownIdError : public DataError {
public:
    using DataError::DataError;
};

class EmptyPositivesError : public DataError {
public:
    using DataError::DataError;
};

class DimensionMismatchError : public DataError {
public:
    using DataError::DataError;
};

class ValidationError : public DataError {
public:
    using DataError::DataError;
};

class EmptyGridError : public DataError {
public:
    using DataError::DataError;
};

class GeometryMismatchError : public DataError {
public:
    using DataError::DataError;
};

class DegenerateLabelsError : public DataError {
public:
    using DataError::DataError;
};

class EmptyMasksError : public DataError {
public:
    using DataError::DataError;
};

class InvalidSpecError : public DataError {
public:
    using DataError::DataError;
};

class EmptyDatasetError : public DataError {
public:
    using DataError::DataError;
};

// --- numeric errors ---

class ZeroNormError : public NumericError {
public:
    using NumericError::NumericError;
};

class NonFiniteError : public NumericError {
public:
    using NumericError::NumericError;
};

}  // namespace vlcabs
