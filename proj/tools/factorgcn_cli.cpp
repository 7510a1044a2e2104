#include "factorgcn/cli.hpp"

int main(int argc, char** argv) { return factorgcn::cli::run(argc, argv); }
