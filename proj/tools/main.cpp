#include "relpool/cli.hpp"

int main(int argc, char** argv) { return relpool::cli::run(argc, argv); }
