#include "trident/zipio.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace trident {

namespace {

constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
// Pinned DOS timestamp (1980-01-01 00:00) keeps archives reproducible.
constexpr std::uint16_t kDosTime = 0;
constexpr std::uint16_t kDosDate = 0x0021;

void put16(std::vector<char>& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put32(std::vector<char>& out, std::uint32_t v) {
  put16(out, static_cast<std::uint16_t>(v & 0xffff));
  put16(out, static_cast<std::uint16_t>((v >> 16) & 0xffff));
}

std::uint16_t get16(const std::vector<char>& buf, std::size_t pos) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(buf[pos]) |
                                    (static_cast<unsigned char>(buf[pos + 1]) << 8));
}

std::uint32_t get32(const std::vector<char>& buf, std::size_t pos) {
  return static_cast<std::uint32_t>(get16(buf, pos)) |
         (static_cast<std::uint32_t>(get16(buf, pos + 2)) << 16);
}

}  // namespace

ZipWriter::ZipWriter(const std::string& path) : path_(path) {}

ZipWriter::~ZipWriter() {
  if (!finished_) {
    try {
      finish();
    } catch (...) {
    }
  }
}

void ZipWriter::add(const std::string& name, const void* data, std::size_t size) {
  if (finished_) throw std::runtime_error("ZipWriter: archive already finished");
  Entry e;
  e.name = name;
  e.size = static_cast<std::uint32_t>(size);
  e.crc = static_cast<std::uint32_t>(
      crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(size)));
  e.offset = static_cast<std::uint32_t>(buffer_.size());
  entries_.push_back(e);

  put32(buffer_, kLocalSig);
  put16(buffer_, 20);  // version needed
  put16(buffer_, 0);   // flags
  put16(buffer_, 0);   // method: stored
  put16(buffer_, kDosTime);
  put16(buffer_, kDosDate);
  put32(buffer_, e.crc);
  put32(buffer_, e.size);
  put32(buffer_, e.size);
  put16(buffer_, static_cast<std::uint16_t>(name.size()));
  put16(buffer_, 0);  // extra length
  buffer_.insert(buffer_.end(), name.begin(), name.end());
  const char* bytes = static_cast<const char*>(data);
  buffer_.insert(buffer_.end(), bytes, bytes + size);
}

void ZipWriter::add(const std::string& name, const std::string& text) {
  add(name, text.data(), text.size());
}

void ZipWriter::finish() {
  if (finished_) return;
  finished_ = true;

  const std::uint32_t central_offset = static_cast<std::uint32_t>(buffer_.size());
  for (const Entry& e : entries_) {
    put32(buffer_, kCentralSig);
    put16(buffer_, 20);  // made by
    put16(buffer_, 20);  // version needed
    put16(buffer_, 0);
    put16(buffer_, 0);
    put16(buffer_, kDosTime);
    put16(buffer_, kDosDate);
    put32(buffer_, e.crc);
    put32(buffer_, e.size);
    put32(buffer_, e.size);
    put16(buffer_, static_cast<std::uint16_t>(e.name.size()));
    put16(buffer_, 0);
    put16(buffer_, 0);
    put16(buffer_, 0);
    put16(buffer_, 0);
    put32(buffer_, 0);
    put32(buffer_, e.offset);
    buffer_.insert(buffer_.end(), e.name.begin(), e.name.end());
  }
  const std::uint32_t central_size = static_cast<std::uint32_t>(buffer_.size()) - central_offset;

  put32(buffer_, kEndSig);
  put16(buffer_, 0);
  put16(buffer_, 0);
  put16(buffer_, static_cast<std::uint16_t>(entries_.size()));
  put16(buffer_, static_cast<std::uint16_t>(entries_.size()));
  put32(buffer_, central_size);
  put32(buffer_, central_offset);
  put16(buffer_, 0);

  std::ofstream out(path_, std::ios::binary);
  if (!out) throw std::runtime_error("ZipWriter: cannot open " + path_);
  out.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
}

ZipReader::ZipReader(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("ZipReader: cannot open " + path);
  file_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  if (file_.size() < 22) throw std::runtime_error("ZipReader: not a zip archive: " + path);

  // locate the end-of-central-directory record (comment-free archives first)
  std::size_t eocd = file_.size() - 22;
  while (get32(file_, eocd) != kEndSig) {
    if (eocd == 0) throw std::runtime_error("ZipReader: missing central directory in " + path);
    --eocd;
  }
  const std::uint16_t count = get16(file_, eocd + 10);
  std::size_t pos = get32(file_, eocd + 16);

  for (std::uint16_t i = 0; i < count; ++i) {
    if (get32(file_, pos) != kCentralSig)
      throw std::runtime_error("ZipReader: corrupt central directory in " + path);
    const std::uint16_t method = get16(file_, pos + 10);
    const std::uint32_t size = get32(file_, pos + 24);
    const std::uint16_t name_len = get16(file_, pos + 28);
    const std::uint16_t extra_len = get16(file_, pos + 30);
    const std::uint16_t comment_len = get16(file_, pos + 32);
    const std::uint32_t local_offset = get32(file_, pos + 42);
    const std::string name(file_.data() + pos + 46, name_len);
    if (method != 0)
      throw std::runtime_error("ZipReader: only stored entries supported: " + name);

    // payload lives after the local header
    const std::uint16_t local_name = get16(file_, local_offset + 26);
    const std::uint16_t local_extra = get16(file_, local_offset + 28);
    index_[name] = {local_offset + 30 + local_name + local_extra, size};
    pos += 46 + name_len + extra_len + comment_len;
  }
}

std::vector<std::string> ZipReader::names() const {
  std::vector<std::string> out;
  out.reserve(index_.size());
  for (const auto& [name, span] : index_) out.push_back(name);
  return out;
}

bool ZipReader::contains(const std::string& name) const { return index_.count(name) > 0; }

std::vector<char> ZipReader::read(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::runtime_error("ZipReader: no entry named " + name);
  const auto [offset, size] = it->second;
  return std::vector<char>(file_.begin() + offset, file_.begin() + offset + size);
}

std::string ZipReader::read_text(const std::string& name) const {
  const std::vector<char> bytes = read(name);
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace trident
