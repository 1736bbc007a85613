#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace bss {

/// Minimal CSV writer with RFC-4180 quoting: fields containing commas,
/// quotes or newlines are wrapped in double quotes and embedded quotes
/// doubled. Lines end with '\n'.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  void row(const std::vector<std::string>& fields);

  static std::string escape(const std::string& field);
  /// Deterministic numeric formatting ("%.12g").
  static std::string num(double value);
  static std::string num(long long value);

 private:
  std::ostream& out_;
};

}  // namespace bss
