#pragma once

#include <stdexcept>
#include <string>

namespace retrace {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// linear algebra core
struct NonHurwitzError : Error { using Error::Error; };
struct SolveFailureError : Error { using Error::Error; };
struct FactorizationFailureError : Error { using Error::Error; };

// simulator
struct GenerationFailureError : Error { using Error::Error; };

// slice statistics / score
struct InsufficientSamplesError : Error { using Error::Error; };
struct SingularCovarianceError : Error { using Error::Error; };

// estimators
struct SingularGramError : Error { using Error::Error; };
struct NonMonotoneLikelihoodError : Error { using Error::Error; };

// baselines
struct EigDecompositionFailureError : Error { using Error::Error; };

// metrics
struct ShapeMismatchError : Error { using Error::Error; };

// pkpd
struct NonPositiveVolumeError : Error { using Error::Error; };

// io / config
struct ParseError : Error { using Error::Error; };
struct ValidationError : Error { using Error::Error; };
struct VersionMismatchError : Error { using Error::Error; };
struct ChecksumMismatchError : Error { using Error::Error; };

}  // namespace retrace
