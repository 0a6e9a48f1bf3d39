/**
 * Exit-code and overwrite behavior of the command line wrapper.
 */

import fs from "node:fs";
import os from "node:os";
import path from "node:path";

import { beforeAll, describe, expect, test } from "vitest";

import { EXIT_BAD_INPUT, EXIT_OK, EXIT_USAGE, main } from "../src/cli.js";

const RUN = path.join(__dirname, "fixtures", "run");
const RT_TRUTH = path.join(__dirname, "fixtures", "truth", "beta_truth.csv");

let tmp: string;

beforeAll(() => {
  tmp = fs.mkdtempSync(path.join(os.tmpdir(), "plots-cli-"));
});

describe("main", () => {
  test("renders and reports success", async () => {
    const out = path.join(tmp, "rt.svg");
    const code = await main(["--run", RUN, "--kind", "rt_ribbon", "--out", out, "--truth", RT_TRUTH]);
    expect(code).toBe(EXIT_OK);
    const svg = fs.readFileSync(out, "utf8");
    expect(svg).toContain('data-layer="truth"');
  });

  test("refuses to overwrite without the flag, allows it with", async () => {
    const out = path.join(tmp, "rt.svg");
    expect(fs.existsSync(out)).toBe(true);
    const refused = await main(["--run", RUN, "--kind", "rt_ribbon", "--out", out]);
    expect(refused).toBe(EXIT_BAD_INPUT);
    const allowed = await main(["--run", RUN, "--kind", "rt_ribbon", "--out", out, "--overwrite"]);
    expect(allowed).toBe(EXIT_OK);
    // the overwrite dropped the truth layer, proving the file was rewritten
    expect(fs.readFileSync(out, "utf8")).not.toContain('data-layer="truth"');
  });

  test("unknown kind is a usage error", async () => {
    const code = await main(["--run", RUN, "--kind", "sparkline", "--out", path.join(tmp, "x.svg")]);
    expect(code).toBe(EXIT_USAGE);
  });

  test("missing required flags is a usage error", async () => {
    const code = await main(["--kind", "trace"]);
    expect(code).toBe(EXIT_USAGE);
  });

  test("unreadable run directory is an input error", async () => {
    const code = await main([
      "--run", "/nonexistent/run", "--kind", "trace", "--out", path.join(tmp, "t.svg"),
    ]);
    expect(code).toBe(EXIT_BAD_INPUT);
  });

  test("wrong truth columns are an input error", async () => {
    const code = await main([
      "--run", RUN, "--kind", "prevalence_ribbon",
      "--out", path.join(tmp, "p.svg"), "--truth", RT_TRUTH,
    ]);
    expect(code).toBe(EXIT_BAD_INPUT);
  });
});
