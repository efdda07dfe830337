#include "nits/checkpoint.hpp"

#include <bit>
#include <boost/crc.hpp>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <vector>

#include "nits/error.hpp"

namespace nits::checkpoint {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

double parse_double(const std::string& text, const std::string& key) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw FormatError("checkpoint header: bad number for '" + key + "': " + text);
  }
  return v;
}

std::uint64_t parse_uint(const std::string& text, const std::string& key) {
  std::uint64_t v = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw FormatError("checkpoint header: bad integer for '" + key + "': " + text);
  }
  return v;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

class Header {
 public:
  explicit Header(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  const std::string& get(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw FormatError("checkpoint header is missing '" + key + "'");
    return it->second;
  }
  double real(const std::string& key) const { return parse_double(get(key), key); }
  std::uint64_t count(const std::string& key) const { return parse_uint(get(key), key); }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace

std::uint64_t crc64(std::span<const unsigned char> bytes) noexcept {
  boost::crc_optimal<64, 0x42F0E1EBA9EA3693ULL, 0xFFFFFFFFFFFFFFFFULL, 0xFFFFFFFFFFFFFFFFULL,
                     true, true>
      crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string serialize(const NitsModel& model) {
  const auto& ws = model.weight_model().spec();
  std::ostringstream head;
  head << kMagic;
  head << "dims=" << model.dims() << '\n';
  head << "pnn_widths=";
  const auto& widths = model.pnn_widths();
  for (std::size_t l = 0; l < widths.size(); ++l) head << (l ? "," : "") << widths[l];
  head << '\n';
  head << "hidden_dim=" << ws.hidden_dim << '\n';
  head << "residual_blocks=" << ws.residual_blocks << '\n';
  head << "dropout=" << format_double(ws.dropout_rate) << '\n';
  head << "masking=" << to_string(ws.masking) << '\n';
  head << "seed=" << model.seed() << '\n';
  for (std::size_t i = 0; i < model.dims(); ++i) {
    const Bounds& b = model.bounds()[i];
    head << "bounds." << i << '=' << format_double(b.lo) << ',' << format_double(b.hi) << '\n';
  }
  for (std::size_t i = 0; i < model.dims(); ++i) {
    head << "shift." << i << '=' << format_double(model.transform().shift[i]) << '\n';
    head << "scale." << i << '=' << format_double(model.transform().scale[i]) << '\n';
  }
  const auto phi = model.weight_model().params();
  head << "param_count=" << phi.size() << '\n';
  head << '\n';

  std::string out = head.str();
  const std::size_t header_size = out.size();
  out.resize(header_size + phi.size() * sizeof(double) + sizeof(std::uint64_t));
  std::memcpy(out.data() + header_size, phi.data(), phi.size() * sizeof(double));
  const std::size_t body = header_size + phi.size() * sizeof(double);
  const std::uint64_t crc =
      crc64({reinterpret_cast<const unsigned char*>(out.data()), body});
  std::memcpy(out.data() + body, &crc, sizeof crc);
  return out;
}

NitsModel deserialize(std::string_view bytes) {
  if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic) {
    throw FormatError("not a NITS checkpoint: bad magic string");
  }
  if (bytes.size() < kMagic.size() + sizeof(std::uint64_t)) {
    throw FormatError("checkpoint is truncated");
  }
  const std::size_t body = bytes.size() - sizeof(std::uint64_t);
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, sizeof stored);
  const std::uint64_t actual =
      crc64({reinterpret_cast<const unsigned char*>(bytes.data()), body});
  if (stored != actual) throw FormatError("checkpoint CRC mismatch: file is corrupted");

  std::map<std::string, std::string> kv;
  std::size_t pos = kMagic.size();
  while (true) {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos || nl >= body) {
      throw FormatError("checkpoint header is not terminated by a blank line");
    }
    const std::string line(bytes.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty()) break;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint header line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const Header h(std::move(kv));

  const std::size_t dims = h.count("dims");
  if (dims == 0) throw FormatError("checkpoint declares zero dimensions");
  std::vector<std::size_t> widths;
  for (const auto& w : split(h.get("pnn_widths"), ',')) widths.push_back(parse_uint(w, "pnn_widths"));

  std::vector<Bounds> bounds;
  AffineMap transform;
  for (std::size_t i = 0; i < dims; ++i) {
    const std::string key = "bounds." + std::to_string(i);
    const auto parts = split(h.get(key), ',');
    if (parts.size() != 2) throw FormatError("checkpoint header: '" + key + "' needs lo,hi");
    bounds.push_back({parse_double(parts[0], key), parse_double(parts[1], key)});
    transform.shift.push_back(h.real("shift." + std::to_string(i)));
    transform.scale.push_back(h.real("scale." + std::to_string(i)));
  }

  try {
    const PnnSpec probe(widths, bounds.front());
    WeightModelSpec ws;
    ws.data_dim = dims;
    ws.hidden_dim = h.count("hidden_dim");
    ws.residual_blocks = h.count("residual_blocks");
    ws.dropout_rate = h.real("dropout");
    ws.params_per_dim = probe.param_count();
    ws.masking = parse_masking(h.get("masking"));
    WeightModel wm(ws);

    const std::size_t count = h.count("param_count");
    if (count != wm.param_count()) {
      throw FormatError("checkpoint declares " + std::to_string(count) +
                        " parameters but the architecture needs " +
                        std::to_string(wm.param_count()));
    }
    if (body - pos != count * sizeof(double)) {
      throw FormatError("checkpoint payload size does not match param_count");
    }
    std::vector<double> phi(count);
    std::memcpy(phi.data(), bytes.data() + pos, count * sizeof(double));
    wm.set_params(phi);
    return NitsModel(std::move(widths), std::move(bounds), std::move(wm), std::move(transform),
                     h.count("seed"));
  } catch (const InvalidParameter& e) {
    throw FormatError(std::string("checkpoint describes an invalid model: ") + e.what());
  }
}

void save(const NitsModel& model, const std::filesystem::path& path) {
  const std::string bytes = serialize(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed to write " + path.string());
}

NitsModel load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize(bytes);
}

}  // namespace nits::checkpoint
