#pragma once

#include <stdexcept>
#include <string>

namespace defid {

// Exit-code contract: 0 success, 1 usage/config, 2 numeric, 3 I/O or parse.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Simulation blew up; carries the substep index where non-finite state appeared.
struct SimDivergerror;
struct SimError : NumericError {
    explicit SimError(const std::string& msg, long substep = -1)
        : NumericError(msg), substep_index(substep) {}
    long substep_index;
};

// det(F) <= 0 for some particle.
struct InvertedElementError : NumericError {
    explicit InvertedElementError(const std::string& msg, long particle = -1)
        : NumericError(msg), particle_index(particle) {}
    long particle_index;
};

struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg, long line = -1)
        : std::runtime_error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
          line_number(line) {}
    long line_number;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitNumeric = 2,
    kExitIo = 3,
};

}  // namespace defid
