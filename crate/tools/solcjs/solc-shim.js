#!/usr/bin/env node
// Command-line adapter that makes a solcjs (soljson) build behave like the
// native `solc` binary for the subset used by solfix:
//
//   solc-shim.js <solc-module-dir> --version
//   solc-shim.js <solc-module-dir> <file.sol>...
//
// Diagnostics are written to stderr in the compiler's human-readable layout
// (the `formattedMessage` field of the standard-JSON interface). The exit code
// is 1 when any error-severity diagnostic is reported, as with native solc.
'use strict';

const fs = require('fs');
const path = require('path');

const [moduleDir, ...rest] = process.argv.slice(2);
if (!moduleDir) {
  process.stderr.write('usage: solc-shim.js <solc-module-dir> (--version | <file.sol>...)\n');
  process.exit(2);
}
const solc = require(path.resolve(moduleDir));

if (rest.includes('--version')) {
  process.stdout.write('solc, the solidity compiler commandline interface\n');
  process.stdout.write('Version: ' + solc.version() + '\n');
  process.exit(0);
}

if (rest.length === 0) {
  process.stderr.write('No input files given.\n');
  process.exit(1);
}

const sources = {};
for (const file of rest) {
  try {
    sources[file] = { content: fs.readFileSync(file, 'utf8') };
  } catch (e) {
    process.stderr.write('Error: "' + file + '" is not found.\n');
    process.exit(1);
  }
}

function findImports(p) {
  try {
    return { contents: fs.readFileSync(p, 'utf8') };
  } catch (e) {
    return { error: 'File not found' };
  }
}

const input = {
  language: 'Solidity',
  sources,
  settings: { outputSelection: { '*': { '*': [] } } },
};

let output;
try {
  output = JSON.parse(solc.compile(JSON.stringify(input), { import: findImports }));
} catch (e) {
  process.stderr.write('Error: ' + e.message + '\n');
  process.exit(1);
}

let failed = false;
for (const err of output.errors || []) {
  process.stderr.write((err.formattedMessage || (err.type + ': ' + err.message)) + '\n');
  if (err.severity === 'error') failed = true;
}
if (!failed) {
  process.stdout.write('Compiler run successful. No output generated.\n');
}
process.exit(failed ? 1 : 0);
