#include "spikehar/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "spikehar/errors.hpp"

namespace spikehar {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'K', 'C'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(buf, bits);
}

}  // namespace

void save_checkpoint(const std::string& path, const NamedTensors& tensors) {
  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    put_u32(buf, static_cast<uint32_t>(name.size()));
    buf.append(name);
    put_u32(buf, static_cast<uint32_t>(tensor.rank()));
    for (int64_t d : tensor.shape()) put_u64(buf, static_cast<uint64_t>(d));
    for (int64_t i = 0; i < tensor.size(); ++i) put_f64(buf, tensor[i]);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError(path + ": write failed");
}

NamedTensors load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string buf = ss.str();

  size_t pos = 0;
  auto need = [&](size_t n, const char* what) {
    if (pos + n > buf.size()) {
      throw FormatError(path + ": truncated " + what + " at byte offset " + std::to_string(pos));
    }
  };
  auto get_u32 = [&](const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  };
  auto get_u64 = [&](const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  };

  need(4, "magic");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw FormatError(path + ": bad magic at byte offset 0 (expected \"SPKC\")");
  }
  pos = 4;
  uint32_t version = get_u32("version");
  if (version != kVersion) {
    throw FormatError(path + ": unsupported version " + std::to_string(version));
  }
  uint32_t count = get_u32("tensor count");
  NamedTensors tensors;
  tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = get_u32("name length");
    need(name_len, "name");
    std::string name = buf.substr(pos, name_len);
    pos += name_len;
    uint32_t rank = get_u32("rank");
    Shape shape;
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      auto dim = static_cast<int64_t>(get_u64("dimension"));
      shape.push_back(dim);
      numel *= dim;
    }
    Tensor t(shape);
    for (int64_t j = 0; j < numel; ++j) {
      uint64_t bits = get_u64("value");
      double v;
      std::memcpy(&v, &bits, 8);
      t[j] = v;
    }
    tensors.emplace_back(std::move(name), std::move(t));
  }
  if (pos != buf.size()) {
    throw FormatError(path + ": trailing bytes at offset " + std::to_string(pos));
  }
  return tensors;
}

void load_into_params(const NamedTensors& tensors, const std::vector<Parameter*>& params) {
  for (Parameter* p : params) {
    bool found = false;
    for (const auto& [name, tensor] : tensors) {
      if (name == p->name) {
        if (!tensor.same_shape(p->value)) {
          throw FormatError("checkpoint tensor '" + name + "' has shape " + shape_str(tensor.shape()) +
                            ", model expects " + shape_str(p->value.shape()));
        }
        p->value = tensor;
        found = true;
        break;
      }
    }
    if (!found) throw FormatError("checkpoint is missing tensor '" + p->name + "'");
  }
}

NamedTensors collect_params(const std::vector<Parameter*>& params) {
  NamedTensors out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.emplace_back(p->name, p->value);
  return out;
}

double checkpoint_scalar(const NamedTensors& tensors, const std::string& name) {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t.scalar_value();
  }
  throw FormatError("checkpoint is missing entry '" + name + "'");
}

bool checkpoint_has(const NamedTensors& tensors, const std::string& name) {
  for (const auto& [n, t] : tensors) {
    if (n == name) return true;
  }
  return false;
}

}  // namespace spikehar
