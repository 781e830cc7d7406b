#pragma once

#include <stdexcept>
#include <string>

namespace scrfocus {

// Base class for every error raised by this library. Subclasses name the
// failure; the message carries the detail.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SCRFOCUS_DEFINE_ERROR(Name)        \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

SCRFOCUS_DEFINE_ERROR(InvalidArgument);
SCRFOCUS_DEFINE_ERROR(IoError);
SCRFOCUS_DEFINE_ERROR(DanglingReference);
SCRFOCUS_DEFINE_ERROR(InvalidPose);
SCRFOCUS_DEFINE_ERROR(UnknownImage);
SCRFOCUS_DEFINE_ERROR(InfeasibleScene);
SCRFOCUS_DEFINE_ERROR(OutOfFrame);
SCRFOCUS_DEFINE_ERROR(NoSeeds);
SCRFOCUS_DEFINE_ERROR(AllImagesSkipped);
SCRFOCUS_DEFINE_ERROR(DimMismatch);
SCRFOCUS_DEFINE_ERROR(NonFiniteLoss);
SCRFOCUS_DEFINE_ERROR(DegenerateSample);
SCRFOCUS_DEFINE_ERROR(NotEnoughCorrespondences);
SCRFOCUS_DEFINE_ERROR(LocalizationFailed);
SCRFOCUS_DEFINE_ERROR(NoSuccessfulFrames);

#undef SCRFOCUS_DEFINE_ERROR

// Parse failure in a text artifact, with the 1-based offending line.
class ParseError : public Error {
 public:
  ParseError(int line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  int line() const { return line_; }

 private:
  int line_;
};

}  // namespace scrfocus
