#ifndef TRANSLID_IO_HPP
#define TRANSLID_IO_HPP

#include <string>
#include <utility>
#include <vector>

#include "translid/embedder.hpp"
#include "translid/feature.hpp"
#include "translid/param.hpp"

namespace translid {

// Binary feature file: magic "FEAT", u32 version = 1, u32 frame_count,
// u32 dim, then frame_count * dim float32 little-endian row-major. Values
// round-trip bit-exactly at 32-bit precision.
void write_feature_file(const std::string& path, const FeatureSequence& feats);
FeatureSequence read_feature_file(const std::string& path);

// Manifest: UTF-8 text, one record per line:
//   utt_id<TAB>relative_path<TAB>lang_id<TAB>space-separated token ids
// The token field may be empty.
struct ManifestEntry {
  std::string utt_id;
  std::string rel_path;
  int lang_id = -1;
  std::vector<int> tokens;
};
void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

// Embedding file: magic "TVEB", u32 version = 1, u32 count, u32 dim, then per
// record: utt id (u16 length + UTF-8 bytes), label id (i32, -1 unknown), dim
// float32 values little-endian.
void write_embedding_file(const std::string& path,
                          const std::vector<LanguageEmbedding>& embeddings);
std::vector<LanguageEmbedding> read_embedding_file(const std::string& path);

// Score file: UTF-8 TSV, header `utt_id<TAB>lang_0..lang_{N-1}`, one row per
// utterance, log-posteriors printed with 6 decimal places.
struct ScoreRow {
  std::string utt_id;
  Vec scores;
};
void write_score_file(const std::string& path,
                      const std::vector<ScoreRow>& rows, int num_langs);
std::vector<ScoreRow> read_score_file(const std::string& path,
                                      int* num_langs_out = nullptr);

// Checkpoint: magic "TVCK", u32 version = 1, stage tag (u16 length + UTF-8),
// config snapshot (u32 length + UTF-8), u32 tensor count, then per tensor:
// name (u16 length + UTF-8), u32 rows, u32 cols, rows * cols float64
// little-endian. Tensors are stored at full precision so a load reproduces
// model outputs bit-identically.
struct Checkpoint {
  std::string stage;        // one of "rnnt", "lid", "backend"
  std::string config_text;  // fully resolved config snapshot
  std::vector<std::pair<std::string, Matrix>> tensors;
};
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Copies param values into / out of a checkpoint by tensor name. Loading
// requires every param present with matching shape (ConfigError otherwise).
void pack_params(const std::vector<Param*>& params, Checkpoint* ck);
void unpack_params(const Checkpoint& ck, const std::vector<Param*>& params);

}  // namespace translid

#endif  // TRANSLID_IO_HPP
