#pragma once

#include <stdexcept>
#include <string>

namespace hieradmm {

// Base class for all errors raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Topology queries on unknown nodes, malformed node ids, broken parent links.
struct TreeError : Error {
  using Error::Error;
};

// Scenario files or programmatic instances that violate an invariant.
struct ValidationError : Error {
  using Error::Error;
};

// Malformed input documents (missing fields, wrong types, bad lengths).
struct ParseError : Error {
  using Error::Error;
};

// A subproblem or the monolithic problem has no feasible point.
struct InfeasibleError : Error {
  using Error::Error;
};

// Numerical failure inside a solver (iteration cap without a usable iterate).
struct SolveError : Error {
  using Error::Error;
};

}  // namespace hieradmm
