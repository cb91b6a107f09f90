// Copyright (c) 2026 The tslab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TSLAB_HARNESS_CLI_H_
#define TSLAB_HARNESS_CLI_H_

#include <string>
#include <vector>

namespace tslab {

// Entry point of the command-line tool. Returns the process exit code:
// 0 success, 2 contract error (bad input, config or usage), 3 numerical
// failure.
int RunCli(int argc, const char* const* argv);
int RunCli(const std::vector<std::string>& args);

}  // namespace tslab

#endif  // TSLAB_HARNESS_CLI_H_
