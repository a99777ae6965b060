#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sublab::cli {

enum ExitCode { kOk = 0, kUsage = 2, kConfig = 3, kNumerical = 4 };

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

// --jobs default: SUBSAMPLE_LAB_THREADS if set and positive, else 1.
int default_jobs();

}  // namespace sublab::cli
