#pragma once

#include <stdexcept>
#include <string>

namespace crfbp {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// numerical failures map to exit code 3, configuration problems to 2
struct NumericalError : Error { using Error::Error; };
struct ConfigurationError : Error { using Error::Error; };

struct DimensionError : ConfigurationError { using ConfigurationError::ConfigurationError; };
struct DomainError : ConfigurationError { using ConfigurationError::ConfigurationError; };
struct DegenerateConfiguration : ConfigurationError { using ConfigurationError::ConfigurationError; };
struct DependencyError : ConfigurationError { using ConfigurationError::ConfigurationError; };

struct SingularLeadingCoefficient : NumericalError { using NumericalError::NumericalError; };
struct UndefinedRatio : NumericalError { using NumericalError::NumericalError; };
struct SingularityError : NumericalError { using NumericalError::NumericalError; };
struct ResonanceError : NumericalError { using NumericalError::NumericalError; };
struct NonConvergence : NumericalError { using NumericalError::NumericalError; };
struct StepRejected : NumericalError { using NumericalError::NumericalError; };
struct StallError : NumericalError { using NumericalError::NumericalError; };
struct WindingUndefined : NumericalError { using NumericalError::NumericalError; };

}  // namespace crfbp
