#include "firelgcp/cli.hpp"

int main(int argc, char** argv) { return firelgcp::cli::run(argc, argv); }
