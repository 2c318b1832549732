#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace socnav::io {

static_assert(std::endian::native == std::endian::little, "framed records assume a little-endian host");

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class MalformedInputError : public FormatError {
 public:
  using FormatError::FormatError;
};
class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};
class TruncatedFileError : public FormatError {
 public:
  using FormatError::FormatError;
};
class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

constexpr std::uint32_t make_tag(const char (&s)[5]) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(s[0])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(s[1])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(s[2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(s[3])) << 24;
}

inline constexpr std::uint32_t kChecksumTag = make_tag("CSUM");

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const unsigned char*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void put_string(std::string_view s) {
    put(static_cast<std::uint64_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  const std::vector<unsigned char>& bytes() const { return bytes_; }
  std::vector<unsigned char> take() { return std::move(bytes_); }

 private:
  std::vector<unsigned char> bytes_;
};

/// Bounds-checked reader; running past the end is a truncation.
class ByteReader {
 public:
  explicit ByteReader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    T value;
    get_bytes(&value, sizeof(T));
    return value;
  }
  void get_bytes(void* out, std::size_t n) {
    if (n > bytes_.size() - pos_) throw TruncatedFileError("record ends unexpectedly");
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::string get_string() {
    const auto n = get<std::uint64_t>();
    if (n > bytes_.size() - pos_) throw TruncatedFileError("string exceeds record");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

/// Writes `magic | u32 version | frames... | CSUM frame(crc32 of all prior bytes)`.
/// Each frame is `u32 tag | u64 length | payload`.
class FrameWriter {
 public:
  FrameWriter(const std::string& path, std::uint32_t magic, std::uint32_t version);
  void write_frame(std::uint32_t tag, const std::vector<unsigned char>& payload);
  /// Appends the checksum trailer and closes the file.
  void finish();
  ~FrameWriter();

  FrameWriter(const FrameWriter&) = delete;
  FrameWriter& operator=(const FrameWriter&) = delete;

 private:
  void raw(const void* data, std::size_t n);

  std::ofstream out_;
  std::string path_;
  unsigned long crc_;
  bool finished_ = false;
};

struct Frame {
  std::uint32_t tag = 0;
  std::vector<unsigned char> payload;
};

/// Streams frames back, verifying the trailer checksum when it is reached.
class FrameReader {
 public:
  FrameReader(const std::string& path, std::uint32_t magic, std::uint32_t version);

  /// Next data frame, or nullopt once the verified trailer has been read.
  std::optional<Frame> next();

 private:
  void raw(void* data, std::size_t n);

  std::ifstream in_;
  unsigned long crc_;
  bool done_ = false;
};

}  // namespace socnav::io
