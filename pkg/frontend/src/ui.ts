/**
 * DOM rendering for the operator panel. Pure view over PanelState: every
 * render reads the store, nothing here mutates simulation state directly.
 */

import type { ControlClient, BoxEventKind } from './api.js';
import {
  PanelStore,
  PanelState,
  buttonsEnabled,
  placementEnabled,
} from './store.js';

const BOX_STATES = [
  'BoxOpen_NoFW',
  'BoxOpen_FW',
  'BoxClosed_NoFW',
  'BoxClosed_FW',
  'Deploy_FW',
];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export class PanelUi {
  private speechEnabled = false;
  private spokenUpTo = 0;

  constructor(
    private readonly client: ControlClient,
    private readonly store: PanelStore,
  ) {}

  mount(): void {
    this.wireButton('btn-power', 'PowerOn');
    this.wireButton('btn-acquire', 'PressAcquire');
    this.wireButton('btn-deploy', 'PressDeploy');
    el<HTMLButtonElement>('btn-lid').addEventListener('click', () => this.toggleLid());
    el<HTMLButtonElement>('btn-attacker').addEventListener('click', () => this.toggleAttacker());
    el<HTMLInputElement>('chk-speech').addEventListener('change', (ev) => {
      this.speechEnabled = (ev.target as HTMLInputElement).checked;
    });
    this.store.subscribe((state) => this.render(state));
  }

  private wireButton(id: string, kind: BoxEventKind): void {
    el<HTMLButtonElement>(id).addEventListener('click', async () => {
      this.store.buttonPending(id, true);
      try {
        const result = await this.client.sendEvent(kind);
        if (!result.ok) {
          this.store.toast(result.body.error ?? `request failed (${result.status})`);
        }
      } catch (err) {
        this.store.toast(String(err));
      } finally {
        this.store.buttonPending(id, false);
      }
    });
  }

  private async toggleLid(): Promise<void> {
    const box = this.store.state.box;
    const kind: BoxEventKind = box && box.lid_open ? 'LidClosed' : 'LidOpened';
    const result = await this.client.sendEvent(kind);
    if (!result.ok) this.store.toast(result.body.error ?? 'lid action failed');
  }

  private async toggleAttacker(): Promise<void> {
    const attacker = this.store.state.attacker;
    if (!attacker || attacker.kind !== 'rogue_ap') return;
    const result = await this.client.toggleAttacker(!attacker.active);
    if (!result.ok) this.store.toast(result.body.error ?? 'attacker toggle failed');
    else this.store.setAttacker(await this.client.attacker());
  }

  async placeOrRemove(id: number, placed: boolean): Promise<void> {
    const result = placed ? await this.client.removeNode(id) : await this.client.placeNode(id);
    if (!result.ok) this.store.toast(result.body.error ?? 'node action failed');
    else this.store.setNodes(await this.client.nodes());
  }

  render(state: PanelState): void {
    const box = state.box;
    el('conn-dot').className = state.connected ? 'dot live' : 'dot dead';
    el('sim-time').textContent = box ? `${(box.sim_time_us / 1e6).toFixed(1)} s` : '–';

    // state diagram: highlight exactly the current node
    for (const name of BOX_STATES) {
      const cell = el(`state-${name}`);
      cell.className = 'state-cell' + (box && box.state === name ? ' active' : '');
    }

    const enabled = buttonsEnabled(state);
    for (const id of ['btn-power', 'btn-acquire', 'btn-deploy']) {
      const button = el<HTMLButtonElement>(id);
      button.disabled = !enabled;
      button.classList.toggle('flashing', state.pendingButtons.has(id));
    }
    el<HTMLButtonElement>('btn-lid').textContent =
      box && !box.lid_open ? 'Open lid' : 'Close lid';
    el('inventory').textContent = box
      ? `${box.keys} keys, ${box.images.length} images` +
        (box.deploy_armed ? ' · deploy armed' : '')
      : 'not connected';

    this.renderNodes(state);
    this.renderSession(state);
    this.renderTranscript(state);
    this.renderAttacker(state);
    this.renderBanner();
    this.renderToasts(state);
    this.speak(state);
  }

  private renderNodes(state: PanelState): void {
    const tray = el('node-tray');
    tray.textContent = '';
    const allowed = placementEnabled(state);
    for (const node of state.nodes) {
      const row = document.createElement('div');
      row.className = 'node-row';
      const label = document.createElement('span');
      label.textContent = `#${node.id} ${node.mac} (${node.honesty})`;
      const badge = document.createElement('span');
      badge.className = 'badge ' + node.mode;
      badge.textContent = node.joined_rogue
        ? 'JOINED ROGUE'
        : node.stage ?? (node.placed ? node.mode : 'on the bench');
      const button = document.createElement('button');
      button.textContent = node.placed ? 'Remove' : 'Place';
      button.disabled = !allowed;
      button.addEventListener('click', () => this.placeOrRemove(node.id, node.placed));
      row.append(label, badge, button);
      tray.append(row);
    }
  }

  private renderSession(state: PanelState): void {
    const box = state.box;
    const pane = el('session');
    if (!box || !box.session) {
      pane.textContent = 'no deploy session';
      return;
    }
    const session = box.session;
    pane.textContent = '';
    const head = document.createElement('div');
    head.textContent =
      `session #${session.session_id}: ${session.flashed} flashed, ` +
      `${session.failed} failed${session.announced ? ' · announced' : ''}`;
    pane.append(head);
    for (const [mac, stage] of Object.entries(session.macs)) {
      const row = document.createElement('div');
      row.className = 'session-row';
      row.textContent = `${mac}: ${stage}`;
      pane.append(row);
    }
  }

  private renderTranscript(state: PanelState): void {
    const pane = el('transcript');
    // append-only render keyed by seq
    while (pane.children.length < state.transcript.length) {
      const entry = state.transcript[pane.children.length];
      const row = document.createElement('div');
      row.className = 'utterance';
      row.dataset.seq = String(entry.seq);
      row.textContent = `[${(entry.t_us / 1e6).toFixed(1)}s] ${entry.text}`;
      pane.append(row);
      pane.scrollTop = pane.scrollHeight;
    }
  }

  private renderAttacker(state: PanelState): void {
    const pane = el('attacker-status');
    const button = el<HTMLButtonElement>('btn-attacker');
    const attacker = state.attacker;
    if (!attacker || attacker.kind === null) {
      pane.textContent = 'no attacker in scenario';
      button.disabled = true;
      return;
    }
    if (attacker.kind === 'eavesdropper') {
      pane.textContent =
        `eavesdropper listening · ${attacker.frames_seen ?? 0} frames, ` +
        `${attacker.decoded_box_tx_bytes ?? 0} box bytes decoded`;
      button.disabled = true;
      return;
    }
    pane.textContent = `rogue access point: ${attacker.active ? 'ACTIVE' : 'off'}`;
    button.disabled = false;
    button.textContent = attacker.active ? 'Disable rogue AP' : 'Enable rogue AP';
  }

  private renderBanner(): void {
    const banner = el('banner');
    if (this.store.hasUtterance('panic')) {
      banner.textContent = 'PANIC: lid opened during deployment, keys erased';
      banner.className = 'banner alert';
    } else if (this.store.hasUtterance('rogue-warning')) {
      banner.textContent = 'ROGUE NETWORK DETECTED: power off the sensor nodes';
      banner.className = 'banner alert';
    } else {
      banner.textContent = '';
      banner.className = 'banner';
    }
  }

  private renderToasts(state: PanelState): void {
    const pane = el('toasts');
    pane.textContent = state.toasts.slice(-3).join(' · ');
  }

  private speak(state: PanelState): void {
    if (!this.speechEnabled || typeof window.speechSynthesis === 'undefined') {
      this.spokenUpTo = state.transcript.length;
      return;
    }
    while (this.spokenUpTo < state.transcript.length) {
      const entry = state.transcript[this.spokenUpTo++];
      window.speechSynthesis.speak(new SpeechSynthesisUtterance(entry.text));
    }
  }
}
