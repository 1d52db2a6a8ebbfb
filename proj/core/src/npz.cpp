#include "advfilter/npz.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "advfilter/errors.hpp"

namespace advfilter {

namespace {

void put16(std::vector<char>& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put32(std::vector<char>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint16_t get16(const char* p) {
  return static_cast<uint16_t>(static_cast<uint8_t>(p[0]) | (static_cast<uint8_t>(p[1]) << 8));
}

uint32_t get32(const char* p) {
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<uint8_t>(p[i]);
  return v;
}

std::string descr_for(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "<f4";
    case torch::kFloat64: return "<f8";
    case torch::kInt64: return "<i8";
    case torch::kUInt8: return "|u1";
    default: throw ArgumentError("npz: unsupported dtype");
  }
}

torch::ScalarType dtype_for(const std::string& descr) {
  if (descr == "<f4") return torch::kFloat32;
  if (descr == "<f8") return torch::kFloat64;
  if (descr == "<i8") return torch::kInt64;
  if (descr == "|u1" || descr == "<u1") return torch::kUInt8;
  throw IoError("npz: unsupported dtype '" + descr + "'");
}

std::vector<char> encode_npy(const torch::Tensor& tensor) {
  auto t = tensor.contiguous().cpu();
  std::ostringstream header;
  header << "{'descr': '" << descr_for(t.scalar_type()) << "', 'fortran_order': False, 'shape': (";
  for (int64_t i = 0; i < t.dim(); ++i) {
    header << t.size(i);
    if (t.dim() == 1 || i + 1 < t.dim()) header << ",";
    if (i + 1 < t.dim()) header << " ";
  }
  header << "), }";
  std::string h = header.str();
  const size_t preamble = 10;
  size_t total = preamble + h.size() + 1;
  h.append((64 - total % 64) % 64, ' ');
  h.push_back('\n');

  std::vector<char> out = {'\x93', 'N', 'U', 'M', 'P', 'Y', 1, 0};
  put16(out, static_cast<uint16_t>(h.size()));
  out.insert(out.end(), h.begin(), h.end());
  const auto* data = static_cast<const char*>(t.data_ptr());
  out.insert(out.end(), data, data + t.nbytes());
  return out;
}

std::string header_field(const std::string& header, const std::string& key) {
  auto pos = header.find("'" + key + "'");
  if (pos == std::string::npos) throw IoError("npy: header lacks " + key);
  pos = header.find(':', pos);
  return header.substr(pos + 1);
}

torch::Tensor decode_npy(const char* data, size_t size, const std::string& name) {
  if (size < 10 || std::memcmp(data, "\x93NUMPY", 6) != 0) throw IoError("npy: bad magic in member " + name);
  const int major = static_cast<uint8_t>(data[6]);
  size_t header_len = 0;
  size_t offset = 0;
  if (major == 1) {
    header_len = get16(data + 8);
    offset = 10;
  } else {
    header_len = get32(data + 8);
    offset = 12;
  }
  const std::string header(data + offset, header_len);
  offset += header_len;

  auto descr_text = header_field(header, "descr");
  auto q1 = descr_text.find('\'');
  auto q2 = descr_text.find('\'', q1 + 1);
  const auto dtype = dtype_for(descr_text.substr(q1 + 1, q2 - q1 - 1));
  auto order = header_field(header, "fortran_order");
  if (order.substr(0, order.find(',')).find("True") != std::string::npos) {
    throw IoError("npy: fortran_order arrays are not supported (" + name + ")");
  }
  auto shape_text = header_field(header, "shape");
  shape_text = shape_text.substr(shape_text.find('(') + 1, shape_text.find(')') - shape_text.find('(') - 1);
  std::vector<int64_t> shape;
  std::istringstream in(shape_text);
  std::string token;
  while (std::getline(in, token, ',')) {
    if (token.find_first_not_of(" ") == std::string::npos) continue;
    shape.push_back(std::stoll(token));
  }
  auto tensor = torch::empty(shape, torch::TensorOptions().dtype(dtype));
  if (offset + tensor.nbytes() > size) throw IoError("npy: truncated member " + name);
  std::memcpy(tensor.data_ptr(), data + offset, tensor.nbytes());
  return tensor;
}

}  // namespace

void write_npz(const std::filesystem::path& path, const NpzArrays& arrays) {
  std::vector<char> out;
  std::vector<char> central;
  uint16_t entries = 0;
  for (const auto& [name, tensor] : arrays) {
    const std::string member = name + ".npy";
    const auto payload = encode_npy(tensor);
    const uint32_t crc = static_cast<uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size())));
    const uint32_t size = static_cast<uint32_t>(payload.size());
    const uint32_t local_offset = static_cast<uint32_t>(out.size());

    put32(out, 0x04034b50);
    put16(out, 20);
    put16(out, 0);
    put16(out, 0);  // stored
    put16(out, 0);
    put16(out, 0x21);  // 1980-01-01
    put32(out, crc);
    put32(out, size);
    put32(out, size);
    put16(out, static_cast<uint16_t>(member.size()));
    put16(out, 0);
    out.insert(out.end(), member.begin(), member.end());
    out.insert(out.end(), payload.begin(), payload.end());

    put32(central, 0x02014b50);
    put16(central, 20);
    put16(central, 20);
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put16(central, 0x21);
    put32(central, crc);
    put32(central, size);
    put32(central, size);
    put16(central, static_cast<uint16_t>(member.size()));
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put32(central, 0);
    put32(central, local_offset);
    central.insert(central.end(), member.begin(), member.end());
    ++entries;
  }
  const uint32_t central_offset = static_cast<uint32_t>(out.size());
  out.insert(out.end(), central.begin(), central.end());
  put32(out, 0x06054b50);
  put16(out, 0);
  put16(out, 0);
  put16(out, entries);
  put16(out, entries);
  put32(out, static_cast<uint32_t>(central.size()));
  put32(out, central_offset);
  put16(out, 0);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot write archive: " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("write failed: " + path.string());
}

NpzArrays read_npz(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open archive: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  NpzArrays arrays;
  size_t pos = 0;
  while (pos + 30 <= bytes.size() && get32(bytes.data() + pos) == 0x04034b50) {
    const char* h = bytes.data() + pos;
    const uint16_t method = get16(h + 8);
    const uint32_t size = get32(h + 18);
    const uint16_t name_len = get16(h + 26);
    const uint16_t extra_len = get16(h + 28);
    std::string name(h + 30, name_len);
    if (method != 0) throw IoError("npz: compressed members are not supported (" + name + ")");
    const size_t data_start = pos + 30 + name_len + extra_len;
    if (data_start + size > bytes.size()) throw IoError("npz: truncated archive " + path.string());
    if (name.size() > 4 && name.substr(name.size() - 4) == ".npy") name.resize(name.size() - 4);
    arrays[name] = decode_npy(bytes.data() + data_start, size, name);
    pos = data_start + size;
  }
  if (arrays.empty()) throw IoError("npz: no arrays found in " + path.string());
  return arrays;
}

}  // namespace advfilter
