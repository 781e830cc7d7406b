#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace scrfocus {

// Command line front end:
//   scrfocus synth|buffer|train|localize|eval|ablate|compare|plot [flags]
// `args` excludes the program name. Returns 0 on success, 2 on a usage
// error (usage text on `err`), 1 on a runtime failure, in which case files
// written by the command are removed again.
int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err);

}  // namespace scrfocus
