#pragma once

#include <stdexcept>
#include <string>

namespace tempo {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// apk-parser
struct NotAZip : Error { using Error::Error; };
struct MissingDex : Error { using Error::Error; };
struct MissingManifest : Error { using Error::Error; };
struct BadMagic : Error { using Error::Error; };
struct TruncatedDex : Error { using Error::Error; };
struct BadAxml : Error { using Error::Error; };

// featurizer
struct EmptyCorpus : Error { using Error::Error; };
struct FingerprintMismatch : Error { using Error::Error; };

// dataset
struct Unsatisfiable : Error { using Error::Error; };
struct TooFewSamples : Error { using Error::Error; };

// byol / classifier
struct ShapeMismatch : Error { using Error::Error; };
struct DegenerateBatch : Error { using Error::Error; };
struct SingleClass : Error { using Error::Error; };
struct NonFinite : Error { using Error::Error; };
struct EmptyTestSet : Error { using Error::Error; };

// report
struct CacheMiss : Error { using Error::Error; };
struct AuthError : Error { using Error::Error; };
struct RateLimited : Error {
  RateLimited(const std::string& msg, int retry_after_s)
      : Error(msg), retry_after_s(retry_after_s) {}
  int retry_after_s;
};
struct MalformedReport : Error { using Error::Error; };
struct EmptyCohort : Error { using Error::Error; };

// cli / pipeline
struct MissingArtifact : Error { using Error::Error; };
struct ConfigInvalid : Error { using Error::Error; };

}  // namespace tempo
