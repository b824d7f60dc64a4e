#include "relex/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "relex/config_json.hpp"
#include "relex/errors.hpp"

namespace relex::model {

namespace {

constexpr char kMagic[4] = {'R', 'X', 'C', 'P'};

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& buf, double v) { put_u64(buf, std::bit_cast<std::uint64_t>(v)); }

void put_string(std::string& buf, const std::string& s) {
  put_u64(buf, s.size());
  buf.append(s);
}

void put_matrix(std::string& buf, const num::Matrix& m) {
  put_u32(buf, static_cast<std::uint32_t>(m.rows()));
  put_u32(buf, static_cast<std::uint32_t>(m.cols()));
  for (double x : m.data()) put_f64(buf, x);
}

std::uint64_t fnv1a(const std::string& buf) {
  std::uint64_t hash = 0xCBF29CE484222325ULL;
  for (unsigned char c : buf) {
    hash ^= c;
    hash *= 0x100000001B3ULL;
  }
  return hash;
}

class Reader {
 public:
  explicit Reader(const std::string& buf) : buf_(buf) {}

  std::uint8_t u8() {
    need(1);
    return byte();
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string str() {
    std::uint64_t len = u64();
    need(len);
    std::string s = buf_.substr(at_, len);
    at_ += len;
    return s;
  }

  num::Matrix matrix() {
    int rows = static_cast<int>(u32());
    int cols = static_cast<int>(u32());
    if (rows < 0 || cols < 0 || static_cast<std::uint64_t>(rows) * cols > (1ULL << 32)) {
      throw IoError("checkpoint matrix header out of range");
    }
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(rows) * cols);
    for (long i = 0; i < static_cast<long>(rows) * cols; ++i) data.push_back(f64());
    return num::Matrix(rows, cols, std::move(data));
  }

  bool done() const { return at_ == buf_.size(); }

 private:
  void need(std::uint64_t n) {
    if (at_ + n > buf_.size()) throw IoError("truncated checkpoint");
  }
  unsigned char byte() { return static_cast<unsigned char>(buf_[at_++]); }

  const std::string& buf_;
  std::size_t at_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string payload;
  put_string(payload, model_config_to_json(ckpt.state.config).dump());

  put_u64(payload, ckpt.schema.names().size());
  for (const auto& name : ckpt.schema.names()) put_string(payload, name);

  const auto& words = ckpt.vocab.id_to_word();
  put_u32(payload, static_cast<std::uint32_t>(ckpt.vocab.min_count()));
  put_u64(payload, words.size() - 2);  // specials are implicit
  for (std::size_t i = 2; i < words.size(); ++i) put_string(payload, words[i]);

  put_u64(payload, static_cast<std::uint64_t>(ckpt.state.step));
  payload.push_back(ckpt.state.stage == Stage::kPretrain ? 0 : 1);
  put_u64(payload, ckpt.state.rng.state());
  put_f64(payload, ckpt.state.best_dev_metric);

  auto matrices = ckpt.state.params.matrices();
  put_u32(payload, static_cast<std::uint32_t>(matrices.size()));
  for (std::size_t i = 0; i < matrices.size(); ++i) {
    put_string(payload, ModelParams::names()[i]);
    put_matrix(payload, *matrices[i]);
  }

  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  out += payload;
  put_u64(out, fnv1a(payload));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (raw.size() < 16) throw IoError("truncated checkpoint");
  if (raw.compare(0, 4, kMagic, 4) != 0) throw IoError("not a checkpoint file: " + path);
  std::uint32_t version = 0;
  for (int i = 0; i < 4; ++i) version |= static_cast<std::uint32_t>(
      static_cast<unsigned char>(raw[4 + i])) << (8 * i);
  if (version != kCheckpointVersion) {
    throw IoError("incompatible checkpoint version " + std::to_string(version) +
                  " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  std::string payload = raw.substr(8, raw.size() - 16);
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(
      static_cast<unsigned char>(raw[raw.size() - 8 + i])) << (8 * i);
  if (fnv1a(payload) != stored) throw IoError("corrupt checkpoint (checksum mismatch)");

  Reader r(payload);
  Checkpoint ckpt;
  nlohmann::json cfg_json;
  try {
    cfg_json = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt checkpoint config: ") + e.what());
  }
  ckpt.state.config = model_config_from_json(cfg_json);

  std::uint64_t schema_count = r.u64();
  std::vector<std::string> names;
  for (std::uint64_t i = 0; i < schema_count; ++i) names.push_back(r.str());
  ckpt.schema = corpus::RelationSchema(std::move(names));

  int min_count = static_cast<int>(r.u32());
  std::uint64_t word_count = r.u64();
  std::vector<std::string> words;
  for (std::uint64_t i = 0; i < word_count; ++i) words.push_back(r.str());
  ckpt.vocab = corpus::Vocabulary(std::move(words), min_count);

  ckpt.state.step = static_cast<long>(r.u64());
  std::uint8_t stage = r.u8();
  if (stage > 1) throw IoError("corrupt checkpoint: bad stage flag");
  ckpt.state.stage = stage == 0 ? Stage::kPretrain : Stage::kMain;
  ckpt.state.rng.set_state(r.u64());
  ckpt.state.best_dev_metric = r.f64();

  std::uint32_t matrix_count = r.u32();
  if (matrix_count != ModelParams::names().size()) {
    throw IoError("corrupt checkpoint: unexpected parameter count");
  }
  std::vector<num::Matrix> values;
  for (std::uint32_t i = 0; i < matrix_count; ++i) {
    std::string name = r.str();
    if (name != ModelParams::names()[i]) {
      throw IoError("corrupt checkpoint: unexpected parameter '" + name + "'");
    }
    values.push_back(r.matrix());
  }
  if (!r.done()) throw IoError("corrupt checkpoint: trailing bytes");
  ckpt.state.params.set_from(values);

  // Cross-check shapes against the config echo.
  const ModelConfig& cfg = ckpt.state.config;
  auto dims = cfg.encoder_dims();
  const auto& p = ckpt.state.params;
  if (p.tables.word_table.cols() != cfg.d_w || p.tables.pos_head.rows() != dims.pos_rows() ||
      p.tables.pos_head.cols() != cfg.d_p || p.tables.pos_tail.rows() != dims.pos_rows() ||
      p.tables.pos_tail.cols() != cfg.d_p ||
      p.conv.kernel.rows() != cfg.d_c ||
      p.conv.kernel.cols() != cfg.window * dims.in_width() ||
      p.conv.bias.cols() != cfg.d_c || p.relation_embedding.rows() != cfg.h ||
      p.relation_embedding.cols() != cfg.rep_dim() || p.relation_bias.cols() != cfg.h ||
      p.tables.word_table.rows() != ckpt.vocab.size() ||
      cfg.h != ckpt.schema.size()) {
    throw IoError("corrupt checkpoint: parameter shapes disagree with config");
  }
  return ckpt;
}

}  // namespace relex::model
