#include "translid/io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "translid/errors.hpp"

namespace translid {

namespace {

// Little-endian binary reader/writer over std::fstream, tracking the byte
// offset so format errors can name the corrupt position.
class Writer {
 public:
  Writer(const std::string& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError(msg("cannot open ", path, " for writing"));
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw IoError(msg("write failed at byte ", offset_, " of ", path_));
    offset_ += n;
  }
  void u16(std::uint16_t v) { le(v); }
  void u32(std::uint32_t v) { le(v); }
  void i32(std::int32_t v) { le(static_cast<std::uint32_t>(v)); }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    le(bits);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    le(bits);
  }
  void str16(const std::string& s) {
    if (s.size() > 0xffff)
      throw IoError(msg("string of ", s.size(), " bytes exceeds the u16 limit"));
    u16(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void str32(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void close() {
    out_.close();
    if (!out_) throw IoError(msg("close failed for ", path_));
  }

 private:
  template <typename T>
  void le(T v) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i)
      buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    bytes(buf, sizeof(T));
  }
  std::string path_;
  std::ofstream out_;
  std::size_t offset_ = 0;
};

class Reader {
 public:
  Reader(const std::string& path)
      : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError(msg("cannot open ", path, " for reading"));
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw IoError(msg("truncated file ", path_, " at byte ", offset_,
                        " (wanted ", n, " more bytes)"));
    offset_ += n;
  }
  std::uint16_t u16() { return le<std::uint16_t>(); }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::int32_t i32() { return static_cast<std::int32_t>(le<std::uint32_t>()); }
  float f32() {
    std::uint32_t bits = le<std::uint32_t>();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    std::uint64_t bits = le<std::uint64_t>();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str16() { return str(u16()); }
  std::string str32() { return str(u32()); }
  void expect_magic(const char* magic) {
    char got[4];
    bytes(got, 4);
    if (std::memcmp(got, magic, 4) != 0)
      throw IoError(msg("bad magic in ", path_, " at byte 0: expected \"",
                        magic, "\""));
  }
  void expect_version(std::uint32_t want) {
    const std::size_t at = offset_;
    const std::uint32_t got = u32();
    if (got != want)
      throw IoError(msg("unsupported version ", got, " in ", path_,
                        " at byte ", at, " (expected ", want, ")"));
  }
  void expect_eof() {
    char c;
    in_.read(&c, 1);
    if (in_.gcount() != 0)
      throw IoError(msg("trailing bytes in ", path_, " at byte ", offset_));
  }
  std::size_t offset() const { return offset_; }
  const std::string& path() const { return path_; }

 private:
  template <typename T>
  T le() {
    unsigned char buf[sizeof(T)];
    bytes(buf, sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(buf[i]) << (8 * i);
    return v;
  }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    if (n > 0) bytes(s.data(), n);
    return s;
  }
  std::string path_;
  std::ifstream in_;
  std::size_t offset_ = 0;
};

}  // namespace

void write_feature_file(const std::string& path, const FeatureSequence& feats) {
  if (feats.frames.rows() < 1)
    throw std::invalid_argument("refusing to write an empty feature sequence");
  Writer w(path);
  w.bytes("FEAT", 4);
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(feats.frames.rows()));
  w.u32(static_cast<std::uint32_t>(feats.frames.cols()));
  for (int t = 0; t < feats.frames.rows(); ++t)
    for (int j = 0; j < feats.frames.cols(); ++j)
      w.f32(static_cast<float>(feats.frames(t, j)));
  w.close();
}

FeatureSequence read_feature_file(const std::string& path) {
  Reader r(path);
  r.expect_magic("FEAT");
  r.expect_version(1);
  const std::uint32_t frames = r.u32();
  const std::uint32_t dim = r.u32();
  if (frames < 1 || dim < 1)
    throw IoError(msg("degenerate shape ", frames, "x", dim, " in ", path));
  FeatureSequence feats;
  feats.frames = Matrix(static_cast<int>(frames), static_cast<int>(dim));
  for (std::uint32_t t = 0; t < frames; ++t)
    for (std::uint32_t j = 0; j < dim; ++j)
      feats.frames(static_cast<int>(t), static_cast<int>(j)) = r.f32();
  r.expect_eof();
  return feats;
}

void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(msg("cannot open ", path, " for writing"));
  for (const ManifestEntry& e : entries) {
    out << e.utt_id << '\t' << e.rel_path << '\t' << e.lang_id << '\t';
    for (std::size_t i = 0; i < e.tokens.size(); ++i) {
      if (i) out << ' ';
      out << e.tokens[i];
    }
    out << '\n';
  }
  out.close();
  if (!out) throw IoError(msg("write failed for ", path));
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(msg("cannot open ", path, " for reading"));
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t begin = 0;
    while (true) {
      const std::size_t tab = line.find('\t', begin);
      fields.push_back(line.substr(begin, tab == std::string::npos
                                              ? std::string::npos
                                              : tab - begin));
      if (tab == std::string::npos) break;
      begin = tab + 1;
    }
    if (fields.size() != 4)
      throw IoError(msg(path, ":", line_no, ": expected 4 tab-separated fields, got ",
                        fields.size()));
    ManifestEntry e;
    e.utt_id = fields[0];
    e.rel_path = fields[1];
    try {
      e.lang_id = std::stoi(fields[2]);
    } catch (const std::exception&) {
      throw IoError(msg(path, ":", line_no, ": bad language id \"", fields[2],
                        "\""));
    }
    std::istringstream toks(fields[3]);
    int tok;
    while (toks >> tok) e.tokens.push_back(tok);
    if (!toks.eof())
      throw IoError(msg(path, ":", line_no, ": bad token field \"", fields[3],
                        "\""));
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_embedding_file(const std::string& path,
                          const std::vector<LanguageEmbedding>& embeddings) {
  const std::uint32_t dim =
      embeddings.empty() ? 0
                         : static_cast<std::uint32_t>(embeddings[0].values.size());
  for (const LanguageEmbedding& e : embeddings)
    if (e.values.size() != dim)
      throw std::invalid_argument(msg("ragged embedding dims: ", e.values.size(),
                                      " vs ", dim));
  Writer w(path);
  w.bytes("TVEB", 4);
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(embeddings.size()));
  w.u32(dim);
  for (const LanguageEmbedding& e : embeddings) {
    w.str16(e.utt_id);
    w.i32(e.label);
    for (double v : e.values) w.f32(static_cast<float>(v));
  }
  w.close();
}

std::vector<LanguageEmbedding> read_embedding_file(const std::string& path) {
  Reader r(path);
  r.expect_magic("TVEB");
  r.expect_version(1);
  const std::uint32_t count = r.u32();
  const std::uint32_t dim = r.u32();
  std::vector<LanguageEmbedding> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    LanguageEmbedding e;
    e.utt_id = r.str16();
    e.label = r.i32();
    e.values.resize(dim);
    for (std::uint32_t j = 0; j < dim; ++j) e.values[j] = r.f32();
    out.push_back(std::move(e));
  }
  r.expect_eof();
  return out;
}

void write_score_file(const std::string& path,
                      const std::vector<ScoreRow>& rows, int num_langs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(msg("cannot open ", path, " for writing"));
  out << "utt_id";
  for (int k = 0; k < num_langs; ++k) out << "\tlang_" << k;
  out << '\n';
  char buf[32];
  for (const ScoreRow& row : rows) {
    if (static_cast<int>(row.scores.size()) != num_langs)
      throw std::invalid_argument(msg("row ", row.utt_id, " has ",
                                      row.scores.size(), " scores, expected ",
                                      num_langs));
    out << row.utt_id;
    for (double s : row.scores) {
      std::snprintf(buf, sizeof buf, "%.6f", s);
      out << '\t' << buf;
    }
    out << '\n';
  }
  out.close();
  if (!out) throw IoError(msg("write failed for ", path));
}

std::vector<ScoreRow> read_score_file(const std::string& path,
                                      int* num_langs_out) {
  std::ifstream in(path);
  if (!in) throw IoError(msg("cannot open ", path, " for reading"));
  std::string line;
  if (!std::getline(in, line))
    throw IoError(msg(path, ": missing header line"));
  int num_langs = 0;
  {
    std::istringstream header(line);
    std::string field;
    bool first = true;
    while (std::getline(header, field, '\t')) {
      if (first) {
        if (field != "utt_id")
          throw IoError(msg(path, ":1: header must start with utt_id"));
        first = false;
      } else {
        ++num_langs;
      }
    }
    if (num_langs < 1) throw IoError(msg(path, ":1: no language columns"));
  }
  std::vector<ScoreRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    ScoreRow row;
    if (!std::getline(fields, row.utt_id, '\t'))
      throw IoError(msg(path, ":", line_no, ": missing utt id"));
    std::string field;
    while (std::getline(fields, field, '\t')) {
      try {
        row.scores.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw IoError(msg(path, ":", line_no, ": bad score \"", field, "\""));
      }
    }
    if (static_cast<int>(row.scores.size()) != num_langs)
      throw IoError(msg(path, ":", line_no, ": expected ", num_langs,
                        " scores, got ", row.scores.size()));
    rows.push_back(std::move(row));
  }
  if (num_langs_out) *num_langs_out = num_langs;
  return rows;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  Writer w(path);
  w.bytes("TVCK", 4);
  w.u32(1);
  w.str16(ck.stage);
  w.str32(ck.config_text);
  w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, tensor] : ck.tensors) {
    w.str16(name);
    w.u32(static_cast<std::uint32_t>(tensor.rows()));
    w.u32(static_cast<std::uint32_t>(tensor.cols()));
    for (std::size_t k = 0; k < tensor.size(); ++k) w.f64(tensor.data()[k]);
  }
  w.close();
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  r.expect_magic("TVCK");
  r.expect_version(1);
  Checkpoint ck;
  ck.stage = r.str16();
  ck.config_text = r.str32();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str16();
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    Matrix tensor(static_cast<int>(rows), static_cast<int>(cols));
    for (std::size_t k = 0; k < tensor.size(); ++k) tensor.data()[k] = r.f64();
    ck.tensors.emplace_back(std::move(name), std::move(tensor));
  }
  r.expect_eof();
  return ck;
}

void pack_params(const std::vector<Param*>& params, Checkpoint* ck) {
  for (const Param* p : params) ck->tensors.emplace_back(p->name, p->value);
}

void unpack_params(const Checkpoint& ck, const std::vector<Param*>& params) {
  for (Param* p : params) {
    const Matrix* found = nullptr;
    for (const auto& [name, tensor] : ck.tensors) {
      if (name == p->name) {
        found = &tensor;
        break;
      }
    }
    if (!found)
      throw ConfigError(msg("checkpoint is missing tensor \"", p->name, "\""));
    if (found->rows() != p->value.rows() || found->cols() != p->value.cols())
      throw ConfigError(msg("checkpoint tensor \"", p->name, "\" is ",
                            found->rows(), "x", found->cols(),
                            " but the model expects ", p->value.rows(), "x",
                            p->value.cols()));
    p->value = *found;
  }
}

}  // namespace translid
