#pragma once

#include <stdexcept>
#include <string>

namespace seta {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SETA_ERROR_KIND(Name)           \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  };

SETA_ERROR_KIND(ConfigError)
SETA_ERROR_KIND(ShapeError)
SETA_ERROR_KIND(StateError)
SETA_ERROR_KIND(BudgetError)
SETA_ERROR_KIND(NumericError)
SETA_ERROR_KIND(OwnershipError)
SETA_ERROR_KIND(IntegrityError)
SETA_ERROR_KIND(ParseError)
SETA_ERROR_KIND(PreconditionError)
SETA_ERROR_KIND(RegistryError)
SETA_ERROR_KIND(ArtifactError)

#undef SETA_ERROR_KIND

}  // namespace seta
