#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "shortcut/config.hpp"
#include "shortcut/errors.hpp"
#include "shortcut/optim.hpp"

namespace shortcut {

inline constexpr char kCheckpointMagic[] = "SHORTCUT1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

// Explicit little-endian encoding so files read back identically anywhere.
class ByteWriter {
 public:
  explicit ByteWriter(std::ostream& os) : os_(os) {}

  void u32(std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os_.write(b, 4);
  }
  void u64(std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os_.write(b, 8);
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void raw(const char* data, size_t n) { os_.write(data, static_cast<std::streamsize>(n)); }

 private:
  std::ostream& os_;
};

class ByteReader {
 public:
  ByteReader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}

  std::uint32_t u32() {
    char b[4];
    read(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    char b[8];
    read(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str(std::uint32_t max_len = 1u << 20) {
    std::uint32_t n = u32();
    if (n > max_len) corrupt("string length " + std::to_string(n) + " too large");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  void read(char* dst, size_t n) {
    is_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is_.gcount()) != n)
      corrupt("unexpected end of file (wanted " + std::to_string(n) + " bytes)");
    offset_ += n;
  }
  [[noreturn]] void corrupt(const std::string& what) const {
    throw CorruptionError(path_ + ": " + what + " at offset " + std::to_string(offset_));
  }
  std::uint64_t offset() const { return offset_; }

 private:
  std::istream& is_;
  std::string path_;
  std::uint64_t offset_ = 0;
};

inline void write_named_tensor(ByteWriter& w, const std::string& name, const Tensor& t) {
  w.str(name);
  w.u32(static_cast<std::uint32_t>(t.rows));
  w.u32(static_cast<std::uint32_t>(t.cols));
  for (float v : t.data) w.f32(v);
}

}  // namespace detail

// A training run frozen to disk: config echo, live + EMA parameters,
// optimizer moments, step counters.
inline void save_checkpoint(const TrainState& state, const RunConfig& cfg,
                            const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FileError("cannot write checkpoint: " + path);
  detail::ByteWriter w(os);
  w.raw(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  w.u32(kCheckpointVersion);
  w.str(serialize_config(cfg));
  w.u64(static_cast<std::uint64_t>(state.step));
  w.u64(static_cast<std::uint64_t>(state.opt.step));

  auto names = state.params.tensor_names();
  auto live = state.params.tensors();
  auto ema = state.ema.shadow.tensors();
  auto m = state.opt.m.tensors();
  auto v = state.opt.v.tensors();
  if (names.size() != live.size() || live.size() != ema.size() || live.size() != m.size() ||
      live.size() != v.size())
    throw ContractError("save_checkpoint: inconsistent parameter sets");
  w.u32(static_cast<std::uint32_t>(4 * names.size()));
  for (size_t i = 0; i < names.size(); ++i) {
    detail::write_named_tensor(w, "live/" + names[i], *live[i]);
    detail::write_named_tensor(w, "ema/" + names[i], *ema[i]);
    detail::write_named_tensor(w, "opt_m/" + names[i], *m[i]);
    detail::write_named_tensor(w, "opt_v/" + names[i], *v[i]);
  }
  os.flush();
  if (!os) throw FileError("write failed: " + path);
}

struct LoadedCheckpoint {
  RunConfig config;
  TrainState state;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("cannot open checkpoint: " + path);
  detail::ByteReader r(is, path);

  char magic[sizeof(kCheckpointMagic) - 1];
  r.read(magic, sizeof(magic));
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    r.corrupt("bad magic");
  std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    r.corrupt("unsupported version " + std::to_string(version));

  LoadedCheckpoint out;
  out.config = parse_config_text(r.str());
  out.config.validate();

  std::uint64_t step = r.u64();
  std::uint64_t opt_step = r.u64();

  TrainState& s = out.state;
  s.net_cfg = out.config.net_config();
  s.grid = out.config.grid();
  s.params = init_params(s.net_cfg, s.grid, out.config.seed);
  s.opt.cfg = out.config.opt_config();
  s.opt.init(s.params);
  s.ema.ratio = out.config.ema_ratio;
  s.ema.init(s.params);
  s.step = static_cast<std::int64_t>(step);
  s.opt.step = static_cast<std::int64_t>(opt_step);

  auto names = s.params.tensor_names();
  auto live = s.params.tensors();
  auto ema = s.ema.shadow.tensors();
  auto m = s.opt.m.tensors();
  auto v = s.opt.v.tensors();

  std::uint32_t count = r.u32();
  if (count != 4 * names.size())
    r.corrupt("tensor count " + std::to_string(count) + " does not match the config (" +
              std::to_string(4 * names.size()) + " expected)");
  for (size_t i = 0; i < names.size(); ++i) {
    Tensor* slots[4] = {live[i], ema[i], m[i], v[i]};
    const char* prefixes[4] = {"live/", "ema/", "opt_m/", "opt_v/"};
    for (int part = 0; part < 4; ++part) {
      std::string name = r.str();
      if (name != prefixes[part] + names[i])
        r.corrupt("unexpected tensor name '" + name + "' (wanted " + prefixes[part] + names[i] +
                  ")");
      std::uint32_t rows = r.u32();
      std::uint32_t cols = r.u32();
      Tensor* dst = slots[part];
      if (static_cast<int>(rows) != dst->rows || static_cast<int>(cols) != dst->cols)
        r.corrupt("tensor " + name + " has shape " + std::to_string(rows) + "x" +
                  std::to_string(cols) + ", config implies " + dst->shape_str());
      for (float& f : dst->data) f = r.f32();
    }
  }
  return out;
}

}  // namespace shortcut
