/*
 * Copyright 2026 The snicsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <fstream>

#include "snicsim/wire.hpp"

namespace snicsim::wire {

void write_dump(const std::filesystem::path& path, std::span<const DumpRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  std::uint8_t header[12];
  for (const auto& rec : records) {
    put_le64(header, rec.timestamp_ns);
    put_le32(header + 8, static_cast<std::uint32_t>(rec.bytes.size()));
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    out.write(reinterpret_cast<const char*>(rec.bytes.data()),
              static_cast<std::streamsize>(rec.bytes.size()));
  }
  if (!out) fail(ErrorCode::IoError, "write to " + path.string() + " failed");
}

std::vector<DumpRecord> read_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<DumpRecord> records;
  std::uint8_t header[12];
  while (in.read(reinterpret_cast<char*>(header), sizeof(header))) {
    DumpRecord rec;
    rec.timestamp_ns = get_le64(header);
    rec.bytes.resize(get_le32(header + 8));
    if (!in.read(reinterpret_cast<char*>(rec.bytes.data()),
                 static_cast<std::streamsize>(rec.bytes.size()))) {
      fail(ErrorCode::IoError, path.string() + ": truncated record");
    }
    records.push_back(std::move(rec));
  }
  if (in.gcount() != 0) fail(ErrorCode::IoError, path.string() + ": truncated record header");
  return records;
}

}  // namespace snicsim::wire
