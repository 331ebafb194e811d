#include "axdelay/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "axdelay/error.hpp"

namespace axdelay {

namespace {

constexpr const char* kMagic = "AXDELAY-CHECKPOINT";

void corrupt(const std::string& what) { throw Error(ErrorCode::CorruptPayload, what); }

void append_double(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xff));
    bits >>= 8;
  }
}

double read_double(const std::string& in, std::size_t at) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)]);
  return std::bit_cast<double>(bits);
}

// Keys and values are single-line tokens; escape the few characters that
// would break the line format.
std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '\\') out += "\\\\";
    else if (c == '\n') out += "\\n";
    else if (c == ' ') out += "\\s";
    else out += c;
  }
  return out;
}

std::string unescape(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out += s[i];
      continue;
    }
    const char n = s[++i];
    out += n == 'n' ? '\n' : n == 's' ? ' ' : n;
  }
  return out;
}

}  // namespace

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

const NamedArray& Checkpoint::array(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return a;
  corrupt("checkpoint has no array '" + name + "'");
  return arrays.front();
}

const std::string& Checkpoint::meta_value(const std::string& key) const {
  const auto it = meta.find(key);
  if (it == meta.end()) corrupt("checkpoint has no metadata '" + key + "'");
  return it->second;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string payload;
  std::ostringstream header;
  header << kMagic << '\n' << "version " << ckpt.version << '\n';
  for (const auto& [k, v] : ckpt.meta) header << "meta " << escape(k) << ' ' << escape(v) << '\n';
  for (const auto& [k, v] : ckpt.blobs) {
    header << "blob " << escape(k) << ' ' << v.size() << '\n';
    payload += v;
  }
  for (const auto& a : ckpt.arrays) {
    if (a.data.size() != a.rows * a.cols) throw Error(ErrorCode::ShapeMismatch, "array " + a.name);
    header << "array " << escape(a.name) << ' ' << a.rows << ' ' << a.cols << '\n';
    for (double v : a.data) append_double(payload, v);
  }
  char sum[17];
  std::snprintf(sum, sizeof(sum), "%016llx", static_cast<unsigned long long>(fnv1a64(payload)));
  header << "payload " << payload.size() << '\n' << "checksum " << sum << '\n' << "end\n";
  return header.str() + payload;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) corrupt("header ends early");
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };

  if (bytes.compare(0, std::strlen(kMagic), kMagic) != 0) corrupt("not a checkpoint file");
  next_line();

  Checkpoint ckpt;
  std::vector<std::pair<std::string, std::uint64_t>> blob_dir;
  std::uint64_t payload_size = 0;
  std::string checksum;
  bool ended = false;
  while (!ended) {
    const std::string line = next_line();
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "meta") {
      const auto space = line.find(' ', 5);
      if (line.size() < 5 || space == std::string::npos) corrupt("malformed meta line");
      ckpt.meta[unescape(line.substr(5, space - 5))] = unescape(line.substr(space + 1));
      continue;
    }
    if (tag == "version") {
      ls >> ckpt.version;
      if (ckpt.version > kCheckpointVersion)
        throw Error(ErrorCode::VersionMismatch,
                    "checkpoint version " + std::to_string(ckpt.version) + " is newer than " +
                        std::to_string(kCheckpointVersion));
      if (ckpt.version == 0) throw Error(ErrorCode::VersionMismatch, "checkpoint version 0");
    } else if (tag == "blob") {
      std::string k;
      std::uint64_t n = 0;
      ls >> k >> n;
      blob_dir.emplace_back(unescape(k), n);
    } else if (tag == "array") {
      NamedArray a;
      ls >> a.name >> a.rows >> a.cols;
      a.name = unescape(a.name);
      ckpt.arrays.push_back(std::move(a));
    } else if (tag == "payload") {
      ls >> payload_size;
    } else if (tag == "checksum") {
      ls >> checksum;
    } else if (tag == "end") {
      ended = true;
    } else {
      corrupt("unknown header line '" + tag + "'");
    }
    if (ls.fail()) corrupt("malformed header line for '" + tag + "'");
  }

  const std::string payload = bytes.substr(pos);
  if (payload.size() != payload_size)
    corrupt("payload holds " + std::to_string(payload.size()) + " bytes, header declares " +
            std::to_string(payload_size));
  char sum[17];
  std::snprintf(sum, sizeof(sum), "%016llx", static_cast<unsigned long long>(fnv1a64(payload)));
  if (checksum != sum) corrupt("checksum mismatch");

  std::uint64_t at = 0;
  for (const auto& [k, n] : blob_dir) {
    if (at + n > payload.size()) corrupt("blob '" + k + "' overruns payload");
    ckpt.blobs[k] = payload.substr(at, n);
    at += n;
  }
  for (auto& a : ckpt.arrays) {
    const std::uint64_t n = a.rows * a.cols;
    if (at + n * 8 > payload.size()) corrupt("array '" + a.name + "' overruns payload");
    a.data.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) a.data[i] = read_double(payload, at + i * 8);
    at += n * 8;
  }
  if (at != payload.size()) corrupt("unclaimed bytes at end of payload");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "rename to " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace axdelay
