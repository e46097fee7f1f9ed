#!/usr/bin/env node
import * as fs from "fs";
import { KINDS, renderBundle } from "./render";
import { SchemaError } from "./schema";

function parseArgs(argv: string[]): { [k: string]: string } {
  const out: { [k: string]: string } = {};
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    if (!flag.startsWith("--") || i + 1 >= argv.length) {
      throw new SchemaError(`bad argument '${flag}'`);
    }
    out[flag.slice(2)] = argv[i + 1];
  }
  return out;
}

export function main(argv: string[]): number {
  let opts: { [k: string]: string };
  try {
    opts = parseArgs(argv);
  } catch (e) {
    process.stderr.write(`render: ${(e as Error).message}\n`);
    return 2;
  }
  for (const key of ["bundle", "kind", "out"]) {
    if (!(key in opts)) {
      process.stderr.write(`render: missing required --${key}\n`);
      process.stderr.write(
        `usage: render --bundle dir --kind {${KINDS.join(",")}} ` +
        `--out file\n`);
      return 2;
    }
  }
  let svg: string;
  try {
    svg = renderBundle(opts.bundle, opts.kind);
  } catch (e) {
    // nothing is written on failure
    process.stderr.write(`render: ${(e as Error).message}\n`);
    return e instanceof SchemaError ? 2 : 1;
  }
  fs.writeFileSync(opts.out, svg);
  return 0;
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
