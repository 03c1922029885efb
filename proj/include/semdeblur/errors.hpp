#pragma once

#include <stdexcept>
#include <string>

namespace semdeblur {

// All library failures derive from Error so callers (the CLI in particular)
// can separate usage problems from runtime ones with a single catch.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SEMDEBLUR_DEFINE_ERROR(Name)   \
  class Name : public Error {          \
   public:                             \
    using Error::Error;                \
  }

SEMDEBLUR_DEFINE_ERROR(ParameterError);
SEMDEBLUR_DEFINE_ERROR(SizeError);
SEMDEBLUR_DEFINE_ERROR(InternalError);
SEMDEBLUR_DEFINE_ERROR(AlignmentError);
SEMDEBLUR_DEFINE_ERROR(LabelError);
SEMDEBLUR_DEFINE_ERROR(InputError);
SEMDEBLUR_DEFINE_ERROR(ContractError);
SEMDEBLUR_DEFINE_ERROR(ProtocolError);
SEMDEBLUR_DEFINE_ERROR(CheckpointError);
SEMDEBLUR_DEFINE_ERROR(ConfigError);
SEMDEBLUR_DEFINE_ERROR(NumericError);
SEMDEBLUR_DEFINE_ERROR(IoError);

#undef SEMDEBLUR_DEFINE_ERROR

}  // namespace semdeblur
