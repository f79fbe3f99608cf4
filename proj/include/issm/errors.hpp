#pragma once

#include <stdexcept>
#include <string>

namespace issm {

// Root of every error raised by the library. The CLI maps these to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInputError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class InsufficientDataError : public Error { using Error::Error; };
class UsageError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class ProtocolError : public Error { using Error::Error; };
class IntegrityError : public Error { using Error::Error; };

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class FilesystemError : public Error {
public:
    FilesystemError(const std::string& what, std::string path)
        : Error(what + ": " + path), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace issm
