#include "a2gnn/cli.hpp"

int main(int argc, char** argv) { return a2gnn::cli::run(argc, argv); }
