#include "socnav/binary_io.hpp"

#include <zlib.h>

namespace socnav::io {

FrameWriter::FrameWriter(const std::string& path, std::uint32_t magic, std::uint32_t version)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path), crc_(crc32(0L, Z_NULL, 0)) {
  if (!out_) throw std::runtime_error("cannot open for writing: " + path);
  raw(&magic, sizeof magic);
  raw(&version, sizeof version);
}

FrameWriter::~FrameWriter() {
  if (!finished_) out_.close();
}

void FrameWriter::raw(const void* data, std::size_t n) {
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  crc_ = crc32(crc_, static_cast<const Bytef*>(data), static_cast<uInt>(n));
}

void FrameWriter::write_frame(std::uint32_t tag, const std::vector<unsigned char>& payload) {
  const auto len = static_cast<std::uint64_t>(payload.size());
  raw(&tag, sizeof tag);
  raw(&len, sizeof len);
  raw(payload.data(), payload.size());
}

void FrameWriter::finish() {
  const auto checksum = static_cast<std::uint32_t>(crc_);
  const std::uint32_t tag = kChecksumTag;
  const std::uint64_t len = sizeof checksum;
  out_.write(reinterpret_cast<const char*>(&tag), sizeof tag);
  out_.write(reinterpret_cast<const char*>(&len), sizeof len);
  out_.write(reinterpret_cast<const char*>(&checksum), sizeof checksum);
  out_.close();
  if (!out_) throw std::runtime_error("write failed: " + path_);
  finished_ = true;
}

FrameReader::FrameReader(const std::string& path, std::uint32_t magic, std::uint32_t version)
    : in_(path, std::ios::binary), crc_(crc32(0L, Z_NULL, 0)) {
  if (!in_) throw std::runtime_error("cannot open for reading: " + path);
  if (in_.peek() == std::ifstream::traits_type::eof()) {
    throw MalformedInputError("empty file: " + path);
  }
  std::uint32_t got_magic = 0;
  raw(&got_magic, sizeof got_magic);
  if (got_magic != magic) throw MalformedInputError("bad magic number in " + path);
  std::uint32_t got_version = 0;
  raw(&got_version, sizeof got_version);
  if (got_version != version) {
    throw VersionMismatchError("format version " + std::to_string(got_version) + ", expected " +
                               std::to_string(version));
  }
  // Check structure and checksum up front so damaged payloads never reach a
  // decoder, then rewind to the first frame.
  const auto first = in_.tellg();
  const unsigned long header_crc = crc_;
  while (next()) {
  }
  in_.clear();
  in_.seekg(first);
  crc_ = header_crc;
  done_ = false;
}

void FrameReader::raw(void* data, std::size_t n) {
  in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) throw TruncatedFileError("file ends mid-record");
  crc_ = crc32(crc_, static_cast<const Bytef*>(data), static_cast<uInt>(n));
}

std::optional<Frame> FrameReader::next() {
  if (done_) return std::nullopt;
  if (in_.peek() == std::ifstream::traits_type::eof()) {
    throw TruncatedFileError("missing checksum trailer");
  }
  const auto expected = static_cast<std::uint32_t>(crc_);
  Frame frame;
  raw(&frame.tag, sizeof frame.tag);
  std::uint64_t len = 0;
  raw(&len, sizeof len);
  if (frame.tag == kChecksumTag) {
    std::uint32_t stored = 0;
    if (len != sizeof stored) throw MalformedInputError("bad checksum frame");
    raw(&stored, sizeof stored);
    if (stored != expected) throw ChecksumError("checksum mismatch");
    if (in_.peek() != std::ifstream::traits_type::eof()) {
      throw MalformedInputError("trailing bytes after checksum");
    }
    done_ = true;
    return std::nullopt;
  }
  // Guard against absurd lengths before allocating.
  const auto here = in_.tellg();
  in_.seekg(0, std::ios::end);
  const auto end = in_.tellg();
  in_.seekg(here);
  if (len > static_cast<std::uint64_t>(end - here)) throw TruncatedFileError("frame exceeds file size");
  frame.payload.resize(len);
  raw(frame.payload.data(), len);
  return frame;
}

}  // namespace socnav::io
