#ifndef TRANSLID_FEATURE_HPP
#define TRANSLID_FEATURE_HPP

#include <string>
#include <vector>

#include "translid/matrix.hpp"

namespace translid {

// One utterance: T x D acoustic frames, with its language label and the
// token transcript when known. Token ids run 1..K; 0 is the blank symbol and
// never appears in a transcript.
struct FeatureSequence {
  std::string utt_id;
  Matrix frames;  // T x D
  int lang_id = -1;
  std::vector<int> tokens;

  int num_frames() const { return frames.rows(); }
  int dim() const { return frames.cols(); }
};

}  // namespace translid

#endif  // TRANSLID_FEATURE_HPP
