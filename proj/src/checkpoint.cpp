#include "argus/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace argus::nn {

namespace {

constexpr char kMagic[4] = {'A', 'V', 'T', '1'};
constexpr const char* kCfgEntry = "__cfg__";

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double v) {
  const uint64_t bits = std::bit_cast<uint64_t>(v);
  for (int i = 0; i < 8; ++i) buf.push_back(char((bits >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, float v) { put_u32(buf, std::bit_cast<uint32_t>(v)); }

struct Reader {
  const std::string& buf;
  const std::string& path;
  size_t pos = 0;

  void need(size_t n) {
    if (pos + n > buf.size()) {
      throw argus::IoError("truncated checkpoint '" + path + "'");
    }
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  uint8_t u8() {
    need(1);
    return uint8_t(buf[pos++]);
  }
  double f64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(buf[pos + i])) << (8 * i);
    pos += 8;
    return std::bit_cast<double>(v);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

std::vector<double> cfg_to_numbers(const ParameterSet& ps) {
  const auto& c = ps.cfg;
  return {double(c.d_model),      double(c.n_layers),
          double(c.n_heads),      c.mlp_ratio,
          double(c.patch_dims[0]), double(c.patch_dims[1]),
          double(c.patch_dims[2]), double(c.grid_dims[0]),
          double(c.grid_dims[1]),  double(c.grid_dims[2]),
          double(c.d_joint),      double(c.d_llm),
          double(c.n_queries),    double(ps.connector_depth),
          double(int(ps.compression)), double(ps.init_seed)};
}

void cfg_from_numbers(ParameterSet& ps, const std::vector<double>& v) {
  if (v.size() != 16) {
    throw argus::IoError("checkpoint config entry has unexpected size");
  }
  auto& c = ps.cfg;
  c.d_model = size_t(v[0]);
  c.n_layers = size_t(v[1]);
  c.n_heads = size_t(v[2]);
  c.mlp_ratio = v[3];
  for (int a = 0; a < 3; ++a) c.patch_dims[a] = uint32_t(v[4 + a]);
  for (int a = 0; a < 3; ++a) c.grid_dims[a] = uint32_t(v[7 + a]);
  c.d_joint = size_t(v[10]);
  c.d_llm = size_t(v[11]);
  c.n_queries = size_t(v[12]);
  ps.connector_depth = int(v[13]);
  ps.compression = Compression(int(v[14]));
  ps.init_seed = uint64_t(v[15]);
}

}  // namespace

void save_checkpoint(const ParameterSet& params, const std::string& path,
                     bool f64_payload) {
  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, uint32_t(params.tensors.size() + 1));

  auto write_entry = [&](const std::string& name, const std::vector<size_t>& shape,
                         const std::vector<double>& data, bool frozen) {
    put_u32(buf, uint32_t(name.size()));
    buf.append(name);
    buf.push_back(f64_payload ? 1 : 0);
    buf.push_back(frozen ? 1 : 0);
    put_u32(buf, uint32_t(shape.size()));
    for (size_t d : shape) put_u32(buf, uint32_t(d));
    if (f64_payload) {
      for (double x : data) put_f64(buf, x);
    } else {
      for (double x : data) put_f32(buf, float(x));
    }
  };

  const auto cfg_numbers = cfg_to_numbers(params);
  write_entry(kCfgEntry, {cfg_numbers.size()}, cfg_numbers, true);
  for (const auto& [name, p] : params.tensors) {
    write_entry(name, p.value.shape, p.value.data, p.frozen);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw argus::IoError("cannot open '" + path + "' for writing");
  out.write(buf.data(), std::streamsize(buf.size()));
  if (!out) throw argus::IoError("short write to '" + path + "'");
}

ParameterSet load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw argus::IoError("cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw argus::IoError("bad magic in '" + path + "'");
  }
  Reader r{buf, path, 4};
  const uint32_t n_entries = r.u32();
  ParameterSet ps;
  bool cfg_seen = false;
  for (uint32_t e = 0; e < n_entries; ++e) {
    const uint32_t name_len = r.u32();
    const std::string name = r.str(name_len);
    const uint8_t dtype = r.u8();
    const uint8_t frozen = r.u8();
    const uint32_t rank = r.u32();
    std::vector<size_t> shape(rank);
    size_t numel = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      shape[i] = r.u32();
      numel *= shape[i];
    }
    std::vector<double> data(numel);
    for (size_t i = 0; i < numel; ++i) {
      data[i] = dtype == 1 ? r.f64() : double(r.f32());
    }
    if (name == kCfgEntry) {
      cfg_from_numbers(ps, data);
      cfg_seen = true;
      continue;
    }
    Tensor t;
    t.shape = std::move(shape);
    t.data = std::move(data);
    ps.tensors[name] = {std::move(t), frozen != 0};
  }
  if (!cfg_seen) {
    throw argus::IoError("checkpoint '" + path + "' has no config entry");
  }
  return ps;
}

std::vector<std::string> checkpoint_diff(const std::string& path_a,
                                         const std::string& path_b) {
  const ParameterSet a = load_checkpoint(path_a);
  const ParameterSet b = load_checkpoint(path_b);
  std::vector<std::string> diff;
  for (const auto& [name, pa] : a.tensors) {
    auto it = b.tensors.find(name);
    if (it == b.tensors.end()) {
      diff.push_back(name);
      continue;
    }
    const auto& pb = it->second;
    if (pa.frozen != pb.frozen || pa.value.shape != pb.value.shape ||
        std::memcmp(pa.value.data.data(), pb.value.data.data(),
                    pa.value.data.size() * sizeof(double)) != 0) {
      diff.push_back(name);
    }
  }
  for (const auto& [name, pb] : b.tensors) {
    if (!a.tensors.count(name)) diff.push_back(name);
  }
  return diff;
}

}  // namespace argus::nn
