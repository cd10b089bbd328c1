#include "mambamil/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "mambamil/errors.hpp"

namespace mambamil {

namespace {

using Kind = FormatError::Kind;

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError(Kind::kTruncated, origin_ + ": truncated checkpoint");
  }
  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::string config_text(const Checkpoint& c) {
  const auto& m = c.config;
  std::ostringstream os;
  os.precision(17);
  os << "task=" << to_string(m.task) << '\n'
     << "input_dim=" << m.input_dim << '\n'
     << "n_layers=" << m.n_layers << '\n'
     << "model_dim=" << m.block.d_model << '\n'
     << "expand=" << m.block.expand << '\n'
     << "n_state=" << m.block.n_state << '\n'
     << "segment=" << m.block.segment << '\n'
     << "conv_k=" << m.block.conv_k << '\n'
     << "dt_rank=" << m.block.dt_rank << '\n'
     << "d_skip=" << (m.block.d_skip ? 1 : 0) << '\n'
     << "variant=" << to_string(m.block.variant) << '\n'
     << "num_classes=" << m.num_classes << '\n'
     << "num_bins=" << m.num_bins << '\n'
     << "attn_hidden=" << m.attn_hidden << '\n'
     << "final_norm=" << (m.final_norm ? 1 : 0) << '\n'
     << "bin_edges=";
  for (std::size_t i = 0; i < c.bin_edges.size(); ++i) os << (i ? ";" : "") << c.bin_edges[i];
  os << '\n';
  return os.str();
}

void parse_config_text(const std::string& text, Checkpoint& c, const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(Kind::kManifest, origin + ": malformed checkpoint config line");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(Kind::kManifest, origin + ": checkpoint config lacks '" + key + "'");
    return it->second;
  };
  auto num = [&](const char* key) { return static_cast<std::size_t>(std::stoull(get(key))); };
  auto& m = c.config;
  try {
    m.task = parse_task(get("task"));
    m.input_dim = num("input_dim");
    m.n_layers = num("n_layers");
    m.block.d_model = num("model_dim");
    m.block.expand = num("expand");
    m.block.n_state = num("n_state");
    m.block.segment = num("segment");
    m.block.conv_k = num("conv_k");
    m.block.dt_rank = num("dt_rank");
    m.block.d_skip = get("d_skip") == "1";
    m.block.variant = parse_variant(get("variant"));
    m.num_classes = num("num_classes");
    m.num_bins = num("num_bins");
    m.attn_hidden = num("attn_hidden");
    m.final_norm = get("final_norm") == "1";
    c.bin_edges.clear();
    std::istringstream edges(get("bin_edges"));
    std::string item;
    while (std::getline(edges, item, ';'))
      if (!item.empty()) c.bin_edges.push_back(std::stod(item));
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(Kind::kManifest, origin + ": bad checkpoint config (" + e.what() + ")");
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string out = "MMC1";
  const std::string text = config_text(ckpt);
  put_le(out, text.size(), 4);
  out += text;
  const auto named = ckpt.params.named_parameters();
  put_le(out, named.size(), 4);
  for (const auto& [name, t] : named) {
    put_le(out, name.size(), 2);
    out += name;
    put_le(out, t.rank(), 1);
    for (auto e : t.shape()) put_le(out, e, 4);
    for (double v : t.data()) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(Kind::kIo, "cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw FormatError(Kind::kIo, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(Kind::kIo, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string origin = path.string();
  Reader r(bytes, origin);
  if (r.str(4) != "MMC1") throw FormatError(Kind::kBadMagic, origin + ": not an MMC1 checkpoint");
  Checkpoint c;
  const auto text_len = static_cast<std::size_t>(r.le(4));
  parse_config_text(r.str(text_len), c, origin);
  c.params = init_model(c.config, 0);
  auto named = c.params.named_parameters();
  const auto count = static_cast<std::size_t>(r.le(4));
  if (count != named.size()) {
    throw FormatError(Kind::kManifest, origin + ": checkpoint holds " + std::to_string(count) + " tensors, config implies " +
                                           std::to_string(named.size()));
  }
  for (auto& [name, t] : named) {
    const std::string stored = r.str(static_cast<std::size_t>(r.le(2)));
    if (stored != name) throw FormatError(Kind::kManifest, origin + ": expected tensor '" + name + "', found '" + stored + "'");
    Shape shape(static_cast<std::size_t>(r.le(1)));
    for (auto& e : shape) e = static_cast<std::size_t>(r.le(4));
    if (shape != t.shape()) throw FormatError(Kind::kManifest, origin + ": tensor '" + name + "' has shape " + shape_str(shape));
    auto values = t.mutable_data();
    for (auto& v : values) v = std::bit_cast<double>(r.le(8));
  }
  if (!r.done()) throw FormatError(Kind::kTrailingBytes, origin + ": trailing bytes after checkpoint");
  return c;
}

}  // namespace mambamil
