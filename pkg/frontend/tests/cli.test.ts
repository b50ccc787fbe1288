import { execFileSync } from "node:child_process";
import { existsSync, mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterEach, describe, expect, it, vi } from "vitest";

import { main, parseArgs } from "../src/cli.js";

const FIXTURES = fileURLToPath(new URL("./fixtures", import.meta.url));
const DIST_CLI = fileURLToPath(new URL("../dist/cli.js", import.meta.url));

function outDir(): string {
  return mkdtempSync(join(tmpdir(), "saddle-plots-out-"));
}

afterEach(() => {
  vi.restoreAllMocks();
});

function quiet(): { errors: string[]; logs: string[] } {
  const errors: string[] = [];
  const logs: string[] = [];
  vi.spyOn(console, "error").mockImplementation((...args: unknown[]) => {
    errors.push(args.join(" "));
  });
  vi.spyOn(console, "log").mockImplementation((...args: unknown[]) => {
    logs.push(args.join(" "));
  });
  return { errors, logs };
}

describe("parseArgs", () => {
  it("parses a full render invocation", () => {
    const spec = parseArgs([
      "render",
      "--kind",
      "training_curves",
      "--in",
      "a.csv",
      "b.csv",
      "--out",
      "fig.svg",
    ]);
    expect(spec).toEqual({
      kind: "training_curves",
      inputs: ["a.csv", "b.csv"],
      output: "fig.svg",
    });
  });

  it("rejects unknown commands, kinds, flags, and outputs", () => {
    expect(() => parseArgs([])).toThrow(/usage/);
    expect(() => parseArgs(["plot"])).toThrow(/unknown command 'plot'/);
    expect(() =>
      parseArgs(["render", "--kind", "pie", "--in", "a.csv", "--out", "f.svg"]),
    ).toThrow(/unknown kind 'pie'.*accuracy_vs_bits/);
    expect(() =>
      parseArgs(["render", "--kind", "training_curves", "--out", "f.svg"]),
    ).toThrow(/--in needs at least one CSV path/);
    expect(() =>
      parseArgs(["render", "--kind", "training_curves", "--in", "a.csv"]),
    ).toThrow(/--out is required/);
    expect(() =>
      parseArgs([
        "render",
        "--kind",
        "training_curves",
        "--in",
        "a.csv",
        "--out",
        "f.png",
      ]),
    ).toThrow(/unsupported output 'f\.png'/);
    expect(() =>
      parseArgs(["render", "--bogus", "x"]),
    ).toThrow(/unknown argument '--bogus'/);
  });
});

describe("main", () => {
  const RENDERS: Array<[string, string[]]> = [
    [
      "accuracy_vs_bits",
      [join(FIXTURES, "quant", "summary.csv"), join(FIXTURES, "plain", "summary.csv")],
    ],
    [
      "compression_error_curve",
      [join(FIXTURES, "quant", "comp_q_saddle_b4_s1.csv")],
    ],
    [
      "lambda_max_bars",
      [
        join(FIXTURES, "diag", "qgm_s1_diag.csv"),
        join(FIXTURES, "diag_sam", "q_saddle_s1_diag.csv"),
      ],
    ],
    [
      "loss_surface_3d",
      [
        join(FIXTURES, "diag", "qgm_s1_surface.csv"),
        join(FIXTURES, "diag_sam", "q_saddle_s1_surface.csv"),
      ],
    ],
    ["training_curves", [join(FIXTURES, "plain", "q_saddle_s1.csv")]],
  ];

  it.each(RENDERS)("renders %s", (kind, inputs) => {
    const { logs } = quiet();
    const out = join(outDir(), `${kind}.svg`);
    const code = main(["render", "--kind", kind, "--in", ...inputs, "--out", out]);
    expect(code).toBe(0);
    expect(logs.join("\n")).toContain(`wrote ${out}`);
    const svg = readFileSync(out, "utf8");
    expect(svg.startsWith("<svg ")).toBe(true);
    expect(svg.trimEnd().endsWith("</svg>")).toBe(true);
  });

  it("is byte-identical across reruns", () => {
    quiet();
    const dir = outDir();
    const a = join(dir, "a.svg");
    const b = join(dir, "b.svg");
    const args = [
      "--kind",
      "training_curves",
      "--in",
      join(FIXTURES, "plain", "q_saddle_s1.csv"),
    ];
    expect(main(["render", ...args, "--out", a])).toBe(0);
    expect(main(["render", ...args, "--out", b])).toBe(0);
    expect(readFileSync(a, "utf8")).toBe(readFileSync(b, "utf8"));
  });

  it("fails with 'no data rows' on a header-only training CSV", () => {
    const { errors } = quiet();
    const dir = outDir();
    const csv = join(dir, "empty.csv");
    writeFileSync(
      csv,
      "round,train_loss_mean,test_acc_consensus,consensus_error,grad_norm_mean," +
        "compression_error_sum,update_norm_sum,bits_transmitted_cumulative\n",
      "utf8",
    );
    const code = main([
      "render",
      "--kind",
      "training_curves",
      "--in",
      csv,
      "--out",
      join(dir, "fig.svg"),
    ]);
    expect(code).toBe(1);
    expect(errors.join("\n")).toMatch(/no data rows/);
  });

  it("fails naming a missing column", () => {
    const { errors } = quiet();
    const dir = outDir();
    const csv = join(dir, "bad.csv");
    writeFileSync(csv, "round,train_loss_mean\n0,1.0\n", "utf8");
    const code = main([
      "render",
      "--kind",
      "training_curves",
      "--in",
      csv,
      "--out",
      join(dir, "fig.svg"),
    ]);
    expect(code).toBe(1);
    expect(errors.join("\n")).toMatch(/missing column 'test_acc_consensus'/);
  });

  it("fails on an unreadable input path", () => {
    const { errors } = quiet();
    const code = main([
      "render",
      "--kind",
      "training_curves",
      "--in",
      "/nonexistent/run.csv",
      "--out",
      join(outDir(), "fig.svg"),
    ]);
    expect(code).toBe(1);
    expect(errors.join("\n")).toMatch(/nonexistent/);
  });

  it("fails on bad usage without writing anything", () => {
    const { errors } = quiet();
    const out = join(outDir(), "fig.svg");
    const code = main(["render", "--kind", "pie", "--in", "a.csv", "--out", out]);
    expect(code).toBe(1);
    expect(errors.join("\n")).toMatch(/unknown kind/);
    expect(existsSync(out)).toBe(false);
  });
});

describe("compiled binary", () => {
  it("renders through dist/cli.js", () => {
    const out = join(outDir(), "fig.svg");
    const stdout = execFileSync(
      process.execPath,
      [
        DIST_CLI,
        "render",
        "--kind",
        "loss_surface_3d",
        "--in",
        join(FIXTURES, "quad", "dpsgd_s0_surface.csv"),
        "--out",
        out,
      ],
      { encoding: "utf8" },
    );
    expect(stdout).toContain(`wrote ${out}`);
    expect(readFileSync(out, "utf8")).toContain("data-center-loss=");
  });

  it("exits nonzero on error through dist/cli.js", () => {
    expect(() =>
      execFileSync(process.execPath, [DIST_CLI, "render", "--kind", "nope"], {
        encoding: "utf8",
        stdio: "pipe",
      }),
    ).toThrow(/Command failed|non-zero/i);
  });
});
