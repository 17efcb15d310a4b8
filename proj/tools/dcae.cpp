#include "dcae/commands.hpp"

int main(int argc, char** argv) { return dcae::cli::main(argc, argv); }
