#pragma once

#include <stdexcept>
#include <string>

namespace skex {

// Base of every error raised by the library. Catching this is enough to
// treat a sample as invalid in batch evaluation.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SKEX_DEFINE_ERROR(Name)           \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

// seqmodel
SKEX_DEFINE_ERROR(SchemaError);
SKEX_DEFINE_ERROR(GrammarError);
SKEX_DEFINE_ERROR(RangeError);
SKEX_DEFINE_ERROR(CodeError);
SKEX_DEFINE_ERROR(ShapeError);
SKEX_DEFINE_ERROR(NaNError);

// geomkern
SKEX_DEFINE_ERROR(ScaleError);
SKEX_DEFINE_ERROR(DegenerateArcError);
SKEX_DEFINE_ERROR(TessellationError);
SKEX_DEFINE_ERROR(EmptySurfaceError);

// imaging, metrics, pipeline
SKEX_DEFINE_ERROR(ArgumentError);
SKEX_DEFINE_ERROR(EmptyBatchError);
SKEX_DEFINE_ERROR(EmptyCloudError);
SKEX_DEFINE_ERROR(PairingError);
SKEX_DEFINE_ERROR(IoError);

#undef SKEX_DEFINE_ERROR

}  // namespace skex
