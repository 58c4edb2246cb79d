#include "argus/ctvol_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace argus {

namespace {

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double v) {
  uint64_t bits = std::bit_cast<uint64_t>(v);
  for (int i = 0; i < 8; ++i) buf.push_back(char((bits >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, float v) {
  uint32_t bits = std::bit_cast<uint32_t>(v);
  put_u32(buf, bits);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;

  bool has(size_t n) const { return pos + n <= buf.size(); }

  uint32_t u32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  double f64() {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(buf[pos + i])) << (8 * i);
    pos += 8;
    return std::bit_cast<double>(v);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  uint8_t u8() { return uint8_t(buf[pos++]); }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return data;
}

constexpr char kMagic[4] = {'C', 'T', 'V', '1'};

}  // namespace

void write_ctvol(const Volume& v, const std::string& path) {
  v.validate();
  std::string buf;
  buf.reserve(29 + 4 * v.voxels.size());
  buf.append(kMagic, 4);
  for (int a = 0; a < 3; ++a) put_u32(buf, v.dims[a]);
  for (int a = 0; a < 3; ++a) put_f64(buf, v.spacing[a]);
  buf.push_back(0);  // dtype f32
  for (float x : v.voxels) put_f32(buf, x);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(buf.data(), std::streamsize(buf.size()));
  if (!out) throw IoError("short write to '" + path + "'");
}

Volume read_ctvol(const std::string& path) {
  const std::string buf = read_file(path);
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw IoError("bad magic in '" + path + "'");
  }
  Reader r{buf, 4};
  if (!r.has(3 * 4 + 3 * 8 + 1)) {
    throw IoError("truncated payload in '" + path + "': header ends early");
  }
  Volume v;
  for (int a = 0; a < 3; ++a) v.dims[a] = r.u32();
  for (int a = 0; a < 3; ++a) v.spacing[a] = r.f64();
  const uint8_t dtype = r.u8();
  if (dtype != 0) {
    throw IoError("unsupported dtype code " + std::to_string(dtype) + " in '" +
                  path + "'");
  }
  const size_t expected = size_t(v.dims[0]) * v.dims[1] * v.dims[2];
  const size_t found = (buf.size() - r.pos) / 4;
  if (found != expected || (buf.size() - r.pos) % 4 != 0) {
    throw IoError("payload mismatch in '" + path + "': header dims imply " +
                  std::to_string(expected) + " voxels, payload holds " +
                  std::to_string(found));
  }
  v.voxels.resize(expected);
  for (size_t i = 0; i < expected; ++i) v.voxels[i] = r.f32();
  v.validate();
  return v;
}

Volume read_raw_with_descriptor(const std::string& json_path) {
  nlohmann::json desc;
  try {
    desc = nlohmann::json::parse(read_file(json_path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad descriptor '" + json_path + "': " + e.what());
  }
  if (!desc.contains("dims") || !desc.contains("spacing")) {
    throw IoError("descriptor '" + json_path + "' needs dims and spacing");
  }
  Volume v;
  for (int a = 0; a < 3; ++a) {
    v.dims[a] = desc["dims"].at(a).get<uint32_t>();
    v.spacing[a] = desc["spacing"].at(a).get<double>();
  }
  std::string raw_path;
  if (desc.contains("data")) {
    raw_path = desc["data"].get<std::string>();
    if (!raw_path.empty() && raw_path[0] != '/') {
      const auto slash = json_path.find_last_of('/');
      if (slash != std::string::npos) {
        raw_path = json_path.substr(0, slash + 1) + raw_path;
      }
    }
  } else {
    raw_path = json_path;
    const auto dot = raw_path.find_last_of('.');
    raw_path = raw_path.substr(0, dot) + ".raw";
  }
  const std::string buf = read_file(raw_path);
  const size_t expected = size_t(v.dims[0]) * v.dims[1] * v.dims[2];
  if (buf.size() != expected * 4) {
    throw IoError("payload mismatch in '" + raw_path + "': expected " +
                  std::to_string(expected) + " f32 voxels");
  }
  v.voxels.resize(expected);
  Reader r{buf, 0};
  for (size_t i = 0; i < expected; ++i) v.voxels[i] = r.f32();
  v.validate();
  return v;
}

Volume load_volume(const std::string& path) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    return read_raw_with_descriptor(path);
  }
  return read_ctvol(path);
}

}  // namespace argus
