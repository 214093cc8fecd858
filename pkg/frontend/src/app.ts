/**
 * Interactive operator dashboard: node dist/app.js HOST:PORT [--config STR2]
 *
 * Keys: c configure, s single step, r run to saturation, m mark saturated,
 * a abort, left/right move the polar intensity slider, q quit.
 */

import * as process from "node:process";

import { SessionClient } from "./client.js";
import type { PulseWire, RampWire } from "./protocol.js";
import { intensityGrid } from "./polar.js";
import { COMMAND_KEYS, renderDashboard } from "./tui.js";
import { enabledCommands, initialView, reduceView, type UiSessionView } from "./viewState.js";

const DEFAULT_RAMP: RampWire = {
  start_uA: 150.0,
  step_uA: 9.0,
  max_uA: 250.0,
  step_duration_s: 4.5,
  pulses_per_step: 19,
};
const DEFAULT_PULSE: PulseWire = { amplitude_uA: 150.0 };
const CONFIG_CYCLE = ["RING", "STR1", "STR2", "STR3", "STR4", "STR5", "STR6"];

function parseArgs(argv: string[]): { host: string; port: number } {
  const target = argv[0] ?? "127.0.0.1:7350";
  const sep = target.lastIndexOf(":");
  if (sep < 1) throw new Error(`expected HOST:PORT, got ${target}`);
  return { host: target.slice(0, sep), port: Number(target.slice(sep + 1)) };
}

async function main(): Promise<void> {
  const { host, port } = parseArgs(process.argv.slice(2));
  let view: UiSessionView = initialView();
  let sliderIndex: number | null = null;
  let nextConfig = 0;

  const client = new SessionClient({ host, port });
  const redraw = () => {
    const grid = intensityGrid(view);
    const intensity =
      sliderIndex !== null && grid[sliderIndex] !== undefined ? grid[sliderIndex] : null;
    process.stdout.write("\x1b[2J\x1b[H");
    process.stdout.write(renderDashboard(view, intensity));
    process.stdout.write("\n");
  };
  client.onEvent((event) => {
    view = reduceView(view, event);
    redraw();
  });

  await client.connect();
  redraw();

  if (process.stdin.isTTY) process.stdin.setRawMode(true);
  process.stdin.resume();
  process.stdin.on("data", (chunk: Buffer) => {
    const key = chunk.toString("utf-8");
    if (key === "q" || key === "") {
      client.close();
      process.exit(0);
    }
    if (key === "[C" || key === "[D") {
      const grid = intensityGrid(view);
      if (grid.length > 0) {
        const current = sliderIndex ?? grid.length - 1;
        sliderIndex = Math.max(0, Math.min(grid.length - 1, current + (key === "[C" ? 1 : -1)));
        redraw();
      }
      return;
    }
    const command = COMMAND_KEYS[key];
    if (!command || !enabledCommands(view).has(command)) return;
    const run = async () => {
      if (command === "configure") {
        const name = CONFIG_CYCLE[nextConfig % CONFIG_CYCLE.length];
        nextConfig += 1;
        await client.configure(name, DEFAULT_RAMP, DEFAULT_PULSE);
      } else if (command === "single_step") {
        await client.confirmedCommand("run_step");
      } else {
        await client.confirmedCommand(command);
      }
    };
    run().catch(() => {
      /* errors already folded into the view */
    });
  });
}

main().catch((err) => {
  process.stderr.write(`error: ${(err as Error).message}\n`);
  process.exit(1);
});
