#include "scrfocus/binary_io.h"

#include <fstream>
#include <sstream>

namespace scrfocus {

std::string ReadFileBytes(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) {
    throw IoError("cannot open " + path);
  }
  std::ostringstream out;
  out << file.rdbuf();
  return out.str();
}

void WriteFileBytes(const std::string& path, const std::string& bytes) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) {
    throw IoError("cannot write " + path);
  }
  file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!file) {
    throw IoError("failed writing " + path);
  }
}

}  // namespace scrfocus
