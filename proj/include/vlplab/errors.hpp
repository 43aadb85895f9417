#pragma once

#include <stdexcept>
#include <string>

namespace vlplab {

enum class Errc {
  ZeroRow,
  ZeroColumn,
  DimMismatch,
  ShapeMismatch,
  NotSquare,
  BadTargets,
  NonFinite,
  NonFiniteGradient,
  NumericUnderflow,
  ViewCountMismatch,
  PredictorMissing,
  MomentumMissing,
  BadConfig,
  EmptyCaptionList,
  CorruptRecord,
  MissingImageFile,
  NoClasses,
  IoError,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

}  // namespace vlplab
