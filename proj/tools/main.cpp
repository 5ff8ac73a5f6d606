#include "infkit/cli.hpp"

int main(int argc, char** argv) { return infkit::cli::run(argc, argv); }
