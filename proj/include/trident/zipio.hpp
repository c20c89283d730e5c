#pragma once

// Stored-entry (uncompressed) zip archive reader/writer, enough to hold
// checkpoint arrays plus a JSON manifest. Timestamps are pinned so identical
// content produces identical archives.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace trident {

class ZipWriter {
 public:
  explicit ZipWriter(const std::string& path);
  ~ZipWriter();

  ZipWriter(const ZipWriter&) = delete;
  ZipWriter& operator=(const ZipWriter&) = delete;

  void add(const std::string& name, const void* data, std::size_t size);
  void add(const std::string& name, const std::string& text);
  void finish();

 private:
  struct Entry {
    std::string name;
    std::uint32_t crc;
    std::uint32_t size;
    std::uint32_t offset;
  };
  std::string path_;
  std::vector<char> buffer_;
  std::vector<Entry> entries_;
  bool finished_ = false;
};

class ZipReader {
 public:
  explicit ZipReader(const std::string& path);

  std::vector<std::string> names() const;
  bool contains(const std::string& name) const;
  std::vector<char> read(const std::string& name) const;
  std::string read_text(const std::string& name) const;

 private:
  std::vector<char> file_;
  std::map<std::string, std::pair<std::uint32_t, std::uint32_t>> index_;  // name -> offset,size
};

}  // namespace trident
