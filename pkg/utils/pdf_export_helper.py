from reportlab.lib import colors
from reportlab.lib.pagesizes import A4
from reportlab.platypus import SimpleDocTemplate, Paragraph, Spacer, Table, TableStyle
from reportlab.lib.styles import getSampleStyleSheet, ParagraphStyle
from reportlab.lib.units import inch
from reportlab.lib.enums import TA_CENTER
from reportlab.graphics.shapes import Drawing, Line
import io
import logging
import os

PASS_COLOR = '#2F855A'
FAIL_COLOR = '#C53030'
HEADER_COLOR = '#1A365D'
DIVIDER_COLOR = '#CBD5E0'


def horizontal_rule(color, weight=2, inset=0.0, width=6.5*inch):
    """Full-width rule, or a centred one when inset is the fraction trimmed from each side"""
    drawing = Drawing(width, 6 + 4*weight)
    y = drawing.height / 2
    drawing.add(Line(width*inset, y, width*(1 - inset), y, strokeColor=colors.HexColor(color), strokeWidth=weight))
    return drawing


def clean_text_for_pdf(text):
    """Escape markup characters reportlab's Paragraph would interpret"""
    if text is None:
        return ""
    text = str(text)
    return text.replace('&', '&amp;').replace('<', '&lt;').replace('>', '&gt;')


def _styles():
    styles = getSampleStyleSheet()
    return {
        'title': ParagraphStyle(
            'RunTitle',
            parent=styles['Heading1'],
            fontSize=24,
            spaceAfter=16,
            spaceBefore=16,
            alignment=TA_CENTER,
            textColor=colors.HexColor('#1A365D'),
            fontName='Helvetica-Bold'
        ),
        'subtitle': ParagraphStyle(
            'RunSubtitle',
            parent=styles['Heading2'],
            fontSize=16,
            spaceAfter=12,
            spaceBefore=16,
            textColor=colors.HexColor('#2D3748'),
            fontName='Helvetica-Bold'
        ),
        'info': ParagraphStyle(
            'InfoBox',
            parent=styles['Normal'],
            fontSize=10,
            spaceAfter=8,
            leftIndent=20,
            rightIndent=20,
            backColor=colors.HexColor('#EBF8FF'),
            borderColor=colors.HexColor('#3182CE'),
            borderWidth=1,
            borderPadding=10,
            borderRadius=5,
            textColor=colors.HexColor('#2A4365')
        ),
        'cell': ParagraphStyle(
            'Cell',
            parent=styles['Normal'],
            fontSize=8,
            leading=10,
            textColor=colors.HexColor('#2D3748')
        ),
        'meta': ParagraphStyle(
            'MetaStyle',
            parent=styles['Normal'],
            fontSize=9,
            spaceAfter=5,
            alignment=TA_CENTER,
            textColor=colors.HexColor('#718096'),
            fontName='Helvetica-Oblique'
        ),
    }


def _checks_table(checks, styles):
    rows = [['Check', 'Status', 'Detail']]
    for check in checks:
        status = 'PASS' if check.get('passed') else 'FAIL'
        color = PASS_COLOR if check.get('passed') else FAIL_COLOR
        rows.append([
            Paragraph(clean_text_for_pdf(check.get('name')), styles['cell']),
            Paragraph(f"<font color='{color}'><b>{status}</b></font>", styles['cell']),
            Paragraph(clean_text_for_pdf(check.get('detail', '')), styles['cell']),
        ])
    table = Table(rows, colWidths=[2.2*inch, 0.7*inch, 3.6*inch], repeatRows=1)
    table.setStyle(TableStyle([
        ('BACKGROUND', (0, 0), (-1, 0), colors.HexColor('#2B6CB0')),
        ('TEXTCOLOR', (0, 0), (-1, 0), colors.white),
        ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
        ('FONTSIZE', (0, 0), (-1, 0), 10),
        ('VALIGN', (0, 0), (-1, -1), 'TOP'),
        ('GRID', (0, 0), (-1, -1), 0.5, colors.HexColor('#E2E8F0')),
        ('ROWBACKGROUNDS', (0, 1), (-1, -1), [colors.white, colors.HexColor('#F7FAFC')]),
        ('TOPPADDING', (0, 0), (-1, -1), 4),
        ('BOTTOMPADDING', (0, 0), (-1, -1), 4),
    ]))
    return table


def create_pdf_report(report, title="Gibbs spectra run summary"):
    """Render a run summary (configuration, per-check status, failures) to PDF bytes"""
    buffer = io.BytesIO()
    doc = SimpleDocTemplate(
        buffer,
        pagesize=A4,
        rightMargin=50,
        leftMargin=50,
        topMargin=60,
        bottomMargin=50,
        title=title,
        invariant=True
    )
    styles = _styles()
    checks = report.get('checks', [])
    failures = report.get('failures', [])
    elements = []

    try:
        elements.append(horizontal_rule(HEADER_COLOR))
        elements.append(Paragraph(clean_text_for_pdf(title), styles['title']))
        elements.append(Paragraph(
            f"command {clean_text_for_pdf(report.get('command'))} | seed {report.get('seed')} | "
            f"schema {report.get('schema', '1')}",
            styles['meta']
        ))
        elements.append(horizontal_rule(HEADER_COLOR))
        elements.append(Spacer(1, 12))

        passed = sum(1 for c in checks if c.get('passed'))
        verdict = 'PASSED' if report.get('passed') else 'FAILED'
        summary = (
            f"<b>Verdict:</b> {verdict}<br/>"
            f"<b>Target:</b> {clean_text_for_pdf(report.get('target') or 'n/a')}<br/>"
            f"<b>Checks passed:</b> {passed} of {len(checks)}"
        )
        elements.append(Paragraph(summary, styles['info']))

        if checks:
            elements.append(Paragraph("Checks", styles['subtitle']))
            elements.append(_checks_table(checks, styles))

        if failures:
            elements.append(horizontal_rule(DIVIDER_COLOR, weight=1, inset=0.25))
            elements.append(Paragraph("Failures", styles['subtitle']))
            for failure in failures:
                elements.append(Paragraph(
                    f"<b>{clean_text_for_pdf(failure.get('name'))}</b>: "
                    f"{clean_text_for_pdf(failure.get('detail', ''))}",
                    styles['cell']
                ))
                elements.append(Spacer(1, 4))

        tolerances = report.get('tolerances') or {}
        if tolerances:
            elements.append(horizontal_rule(DIVIDER_COLOR, weight=1, inset=0.25))
            elements.append(Paragraph("Tolerances", styles['subtitle']))
            tol_text = "<br/>".join(f"{name}: {value:g}" for name, value in sorted(tolerances.items()))
            elements.append(Paragraph(tol_text, styles['info']))

        doc.build(elements)
    except Exception as e:
        logging.error(f"Error building PDF report: {str(e)}")
        buffer = io.BytesIO()
        doc = SimpleDocTemplate(buffer, pagesize=A4, invariant=True)
        fallback = getSampleStyleSheet()
        doc.build([
            Paragraph(clean_text_for_pdf(title), fallback['Title']),
            Paragraph(f"Verdict: {'PASSED' if report.get('passed') else 'FAILED'}", fallback['Normal']),
            Paragraph(f"Checks: {len(checks)}, failures: {len(failures)}", fallback['Normal']),
        ])

    buffer.seek(0)
    return buffer.getvalue()


def write_pdf_report(report, path, title="Gibbs spectra run summary"):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'wb') as handle:
        handle.write(create_pdf_report(report, title))
    logging.info(f"Wrote PDF summary to {path}")
