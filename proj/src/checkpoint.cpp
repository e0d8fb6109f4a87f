#include "asr/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string_view>

#include "asr/errors.hpp"
#include "asr/fileio.hpp"

namespace asr {

namespace {

constexpr std::string_view kMagic = "ASRCKPT1";

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void f32_array(std::span<const double> values) {
    u32(static_cast<std::uint32_t>(values.size()));
    for (double v : values) u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  void raw(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::string_view raw(std::size_t n) {
    need(n);
    std::string_view s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::vector<double> f32_array() {
    const std::uint32_t n = u32();
    need(static_cast<std::size_t>(n) * 4);
    std::vector<double> out(n);
    for (auto& v : out) v = static_cast<double>(std::bit_cast<float>(u32()));
    return out;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const ModelState& model) {
  const Architecture& arch = model.arch();
  Writer w;
  w.raw(kMagic);
  w.raw(std::string_view(reinterpret_cast<const char*>(&kCheckpointVersion), 1));
  std::vector<std::uint32_t> desc{static_cast<std::uint32_t>(arch.input_dim),
                                  static_cast<std::uint32_t>(arch.num_classes),
                                  static_cast<std::uint32_t>(arch.hidden_widths.size())};
  for (auto width : arch.hidden_widths) desc.push_back(static_cast<std::uint32_t>(width));
  for (bool norm : arch.norm_after_hidden) desc.push_back(norm ? 1u : 0u);
  w.u32(static_cast<std::uint32_t>(desc.size()));
  for (auto v : desc) w.u32(v);
  w.f32_array(model.theta());
  w.f32_array(model.source_theta());
  for (const auto* set : {&model.stats(), &model.source_stats()}) {
    for (const auto& st : *set) {
      w.f32_array(st.mean);
      w.f32_array(st.var);
    }
  }
  return w.take();
}

ModelState decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.raw(kMagic.size()) != kMagic) throw FormatError("not a checkpoint (bad magic)");
  const auto version = static_cast<unsigned char>(r.raw(1)[0]);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t n = r.u32();
  if (n < 3) throw FormatError("architecture descriptor too short");
  std::vector<std::uint32_t> desc(n);
  for (auto& v : desc) v = r.u32();
  Architecture arch;
  arch.input_dim = desc[0];
  arch.num_classes = desc[1];
  const std::size_t hidden = desc[2];
  if (n != 3 + 2 * hidden) throw FormatError("architecture descriptor length mismatch");
  arch.hidden_widths.assign(desc.begin() + 3, desc.begin() + 3 + static_cast<std::ptrdiff_t>(hidden));
  arch.norm_after_hidden.clear();
  for (std::size_t i = 0; i < hidden; ++i) arch.norm_after_hidden.push_back(desc[3 + hidden + i] != 0);
  try {
    arch.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint architecture invalid: ") + e.what());
  }

  ModelState model(arch);
  auto theta = r.f32_array();
  auto source = r.f32_array();
  std::vector<NormStats> stats(arch.norm_layer_count()), source_stats(arch.norm_layer_count());
  for (auto* set : {&stats, &source_stats}) {
    for (auto& st : *set) {
      st.mean = r.f32_array();
      st.var = r.f32_array();
    }
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint");
  try {
    model.assign(std::move(theta), std::move(source), std::move(stats), std::move(source_stats));
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint inconsistent: ") + e.what());
  }
  model.set_mode(StatsMode::kRunning);
  return model;
}

void save_checkpoint(const ModelState& model, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(model));
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw InputError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace asr
