#pragma once

#include <stdexcept>
#include <string>

namespace opetsim {

// Base class for every error raised by the library. Callers that want a
// single catch site can catch this; the CLI maps it to a nonzero exit code.
class SimulationError : public std::runtime_error {
public:
    explicit SimulationError(const std::string& msg) : std::runtime_error(msg) {}
};

// A numeric field is outside its admissible range. The message names the
// offending field with a slash-separated path when raised during config
// validation.
class RangeError : public SimulationError {
public:
    using SimulationError::SimulationError;
};

// Structural problem in a config document: unknown key, wrong JSON type,
// missing required field, or malformed document.
class SchemaError : public SimulationError {
public:
    using SimulationError::SimulationError;
};

// Injected dose is not a positive finite amount.
class InvalidDose : public SimulationError {
public:
    using SimulationError::SimulationError;
};

// Requested occupancy would exceed the configured saturation cap, so the
// linear (unsaturated) binding model no longer applies.
class SaturationExceeded : public SimulationError {
public:
    using SimulationError::SimulationError;
};

// Neither competing ligand has affinity for the receptor population, so an
// attachment probability is undefined.
class ZeroAffinity : public SimulationError {
public:
    using SimulationError::SimulationError;
};

// No mixing ratio in the searched bracket equalises bound agonist and bound
// antagonist over the given regions.
class NoBalancePossible : public SimulationError {
public:
    using SimulationError::SimulationError;
};

// Dose calibration cannot reach the analgesia threshold before the
// saturation cap is hit.
class ThresholdUnreachable : public SimulationError {
public:
    using SimulationError::SimulationError;
};

// Scan timing window is degenerate or negative.
class InvalidWindow : public SimulationError {
public:
    using SimulationError::SimulationError;
};

// A probability parameter lies outside [0, 1].
class InvalidProbability : public SimulationError {
public:
    using SimulationError::SimulationError;
};

// Fewer paired observations than the statistical procedure requires.
class InsufficientData : public SimulationError {
public:
    using SimulationError::SimulationError;
};

// Every replicate/region pair was excluded (undefined ratio in at least one
// member of each pair), leaving nothing to test.
class AllExcluded : public SimulationError {
public:
    using SimulationError::SimulationError;
};

// Filesystem rather than model failure: unreadable input or unwritable output.
class IoError : public SimulationError {
public:
    using SimulationError::SimulationError;
};

} // namespace opetsim
