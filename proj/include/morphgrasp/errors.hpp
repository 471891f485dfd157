#pragma once

#include <stdexcept>
#include <string>

namespace morphgrasp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text; carries the 1-based line where parsing stopped (0 if unknown).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line)
      : Error(what + (line > 0 ? " (line " + std::to_string(line) + ")" : "")), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

#define MORPHGRASP_DEFINE_ERROR(Name)   \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

MORPHGRASP_DEFINE_ERROR(StructureError);    // link/joint graph is not a tree
MORPHGRASP_DEFINE_ERROR(ValidationError);   // well-formed input violating a contract
MORPHGRASP_DEFINE_ERROR(ArityError);        // shape or count mismatch
MORPHGRASP_DEFINE_ERROR(LimitError);        // joint value outside its limits
MORPHGRASP_DEFINE_ERROR(GeometryError);     // degenerate geometry
MORPHGRASP_DEFINE_ERROR(MappingError);      // canonical mapping misuse
MORPHGRASP_DEFINE_ERROR(EmbodimentError);   // pose/mask from a different embodiment
MORPHGRASP_DEFINE_ERROR(DegeneracyError);   // rotation parameterization degenerate
MORPHGRASP_DEFINE_ERROR(FeatureError);      // morphology feature missing
MORPHGRASP_DEFINE_ERROR(NumericError);      // non-finite intermediate value
MORPHGRASP_DEFINE_ERROR(RangeError);        // index or timestep out of range
MORPHGRASP_DEFINE_ERROR(CapabilityError);   // operation needs data the object lacks
MORPHGRASP_DEFINE_ERROR(DomainError);       // mathematically undefined input
MORPHGRASP_DEFINE_ERROR(StateError);        // required state not loaded
MORPHGRASP_DEFINE_ERROR(IoError);           // file system failure
MORPHGRASP_DEFINE_ERROR(CheckpointError);   // checkpoint incompatible with the model
MORPHGRASP_DEFINE_ERROR(GenerationError);   // toy grasp construction impossible
MORPHGRASP_DEFINE_ERROR(MutationError);     // morphology variation cannot be applied

#undef MORPHGRASP_DEFINE_ERROR

}  // namespace morphgrasp
