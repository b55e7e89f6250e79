#pragma once
#include <stdexcept>
#include <string>

namespace seqlab {

// Every thrown error carries a short machine-readable category; the CLI maps
// categories onto its exit-code taxonomy.
struct Error : std::runtime_error {
    Error(std::string category, const std::string& msg)
        : std::runtime_error(msg), category(std::move(category)) {}
    std::string category;
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& msg) : Error("dimension", msg) {}
};
struct IndexError : Error {
    explicit IndexError(const std::string& msg) : Error("index", msg) {}
};
struct ContractError : Error {
    explicit ContractError(const std::string& msg) : Error("contract", msg) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};
struct VocabError : Error {
    explicit VocabError(const std::string& msg) : Error("vocab", msg) {}
};
struct ContextOverflowError : Error {
    explicit ContextOverflowError(const std::string& msg) : Error("context_overflow", msg) {}
};
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error("data", msg) {}
};
struct EncodingError : Error {
    explicit EncodingError(const std::string& msg) : Error("encoding", msg) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error("numeric", msg) {}
};

}  // namespace seqlab
