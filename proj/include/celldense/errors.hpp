#pragma once

#include <stdexcept>
#include <string>

namespace celldense {

// Root of the library's error hierarchy. Everything thrown on purpose
// derives from this, so callers can catch one type at the boundary.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A tile has no covering cell, so no column of the assignment matrix can
// be normalized for it.
class UncoveredTile : public Error {
public:
    explicit UncoveredTile(int tile)
        : Error("tile " + std::to_string(tile) + " is not covered by any cell"),
          tile_(tile) {}
    int tile() const { return tile_; }

private:
    int tile_;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

// A strictly positive denominator came out zero (or non-finite) where the
// estimator's preconditions promised otherwise.
class ZeroDenominator : public Error {
public:
    using Error::Error;
};

// p_i'u = 0 for a cell with c_i > 0: the likelihood is -inf everywhere the
// iteration can reach from here.
class DegenerateDenominator : public Error {
public:
    using Error::Error;
};

class ZeroPrior : public Error {
public:
    using Error::Error;
};

// P A P' could not be factorized; the assignment matrix has linearly
// dependent rows even after duplicates were merged.
class SingularGram : public Error {
public:
    using Error::Error;
};

class NoSeeds : public Error {
public:
    using Error::Error;
};

// The requested hotspot clusters cannot be placed without overlap.
class ClustersDontFit : public Error {
public:
    using Error::Error;
};

// Exact transport problem above the safety cap; use the lattice
// approximation instead.
class TooLarge : public Error {
public:
    using Error::Error;
};

class MassImbalance : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace celldense
